pub mod cli;
pub mod corpus;
pub mod dsp;
pub mod kv;
pub mod model;
pub mod numerics;
pub mod seed;
pub mod text;
pub mod trainer;
pub mod visual;
