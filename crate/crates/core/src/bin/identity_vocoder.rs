//! Reference implementation of the external-vocoder protocol: copies every
//! `<in-dir>/<i>.wav` to `<out-dir>/<i>.wav` unchanged.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use resynth_detect::harness::wav::{load_wav, save_wav};

#[derive(Parser)]
#[command(about = "Identity vocoder: writes each input back unchanged")]
struct Args {
    #[arg(long)]
    in_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    sample_rate: u32,
    /// Skip writing this output index (protocol testing).
    #[arg(long)]
    drop_index: Option<usize>,
    /// Write outputs at this rate instead (protocol testing).
    #[arg(long)]
    force_rate: Option<u32>,
}

fn run(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(&args.in_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    names.sort();
    for path in names {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let index: usize = stem.parse()?;
        if Some(index) == args.drop_index {
            continue;
        }
        let x = load_wav(&path)?;
        if x.sample_rate() != args.sample_rate {
            return Err(format!(
                "{} is {} Hz, expected {}",
                path.display(),
                x.sample_rate(),
                args.sample_rate
            )
            .into());
        }
        let rate = args.force_rate.unwrap_or(x.sample_rate());
        let y = resynth_detect::Waveform::new(x.into_samples(), rate)?;
        save_wav(&args.out_dir.join(format!("{index}.wav")), &y)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("identity-vocoder: {e}");
            ExitCode::FAILURE
        }
    }
}
