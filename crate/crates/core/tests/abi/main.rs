//! External interfaces: the vocoder bridge protocol, the CLI and the on-disk
//! experiment artifacts.

mod bridge;
mod cli;
mod experiment;
