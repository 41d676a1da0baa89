//! A signature-driven broadcasting kernel engine.
//!
//! Operators are declared with a dimension signature (`a(n); [o]b()`) and a
//! kernel body written in a small C-like macro language. The engine matches
//! argument shapes against the signature, promotes types, and runs the kernel
//! once per broadcast tuple. Kernels can also be expanded into loop-nest text,
//! and dataflow links connect parent and child arrays lazily.

pub mod cli;
pub mod dataflow;
pub mod engine;
pub mod kernelc;
pub mod ndarray;
pub mod sigparse;
pub mod typesys;
