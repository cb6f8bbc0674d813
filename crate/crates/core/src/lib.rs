pub mod base_measure;
pub mod dependence;
pub mod error;
pub mod eval;
pub mod latent;
pub mod levy;
pub mod models;
pub mod quadrature;
pub mod samplers;
pub mod special;
