//! Executable models of four dynamic-ID multi-server password
//! authentication schemes, the impersonation attacks against them, and a
//! symbolic audit of the design conditions those attacks violate.

pub mod attacks;
pub mod audit;
pub mod cli;
pub mod deduce;
pub mod harness;
pub mod schemes;
pub mod term;
pub mod value;
