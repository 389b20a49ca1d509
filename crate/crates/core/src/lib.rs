pub mod cli;
pub mod engine;
pub mod exec;
pub mod gen;
pub mod netmodel;
pub mod oracle;
pub mod pktset;
pub mod policy;
pub mod xfer;
