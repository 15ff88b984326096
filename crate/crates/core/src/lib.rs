pub mod chemgraph;
pub mod reaction;
pub mod vocab;
pub mod numerics;
pub mod encoders;
pub mod pretrain;
pub mod finetune;
pub mod analysis;
pub mod config;
