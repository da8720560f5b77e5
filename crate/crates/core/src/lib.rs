pub mod cfg;
pub mod concretizer;
pub mod encoder;
pub mod engine;
pub mod explorer;
pub mod frontend;
pub mod ir;
pub mod mutation;
pub mod oracle;
pub mod types;

#[cfg(test)]
mod samples;

#[cfg(feature = "testgen")]
pub mod testgen;
