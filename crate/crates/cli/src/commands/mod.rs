//! One module per subcommand. Each exposes a clap `Args` struct and a
//! `run(&RunConfig, args)` entry point returning the library's `Result`,
//! plus an `execute`-level function the `demo` command composes directly.

pub mod classify;
pub mod dataset;
pub mod demo;
pub mod detect;
pub mod evaluate;
pub mod generate;
pub mod render_cmd;
pub mod spectrogram;
pub mod stage1;
pub mod stage2;
pub mod sweep;

use clap::ValueEnum;
use gearvib::siggen::SignalFormat;

/// CLI spelling of the signal encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// One decimal sample per line.
    Csv,
    /// Raw little-endian 32-bit floats.
    RawF32Le,
}

impl From<FormatArg> for SignalFormat {
    fn from(f: FormatArg) -> SignalFormat {
        match f {
            FormatArg::Csv => SignalFormat::Csv,
            FormatArg::RawF32Le => SignalFormat::RawF32Le,
        }
    }
}
