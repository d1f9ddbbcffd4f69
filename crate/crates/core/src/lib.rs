pub mod claim_detect;
pub mod cli;
pub mod config;
pub mod eval;
pub mod mae;
pub mod media;
pub mod nnet;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod tokenizer;
pub mod verify;
