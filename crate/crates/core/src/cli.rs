//! Command-line surface.
//!
//! Exit codes: 0 success, 2 usage error, 3 input validation, 4 numeric or
//! degenerate failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fading::{select_best_family, FadingFamily, FadingFit};
use crate::io::{self, Document};
use crate::model::{amplitude_rel_db, AmplitudeTrack, Azimuth, CarrierConfig, TrackScan};
use crate::pdp::{scan_to_amplitude_track, PipelineConfig, TrackMode};
use crate::spatial::{
    autocorrelation, decorrelation_empirical, fit_damped_cos, AutocorrOptions, AutocorrSeries, DampedCosParams,
    DEFAULT_MIN_PAIRS,
};
use crate::synth::{generate_scan, generate_track};

pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "smallscale", version, about = "Small-scale spatial fading and autocorrelation toolkit")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-position received powers and amplitudes of a scan, omni and per azimuth.
    Process {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit Ricean, log-normal and Rayleigh marginals to a track.
    FitFading {
        input: PathBuf,
        #[arg(long, default_value = "omni", value_parser = parse_mode)]
        mode: TrackMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spatial autocorrelation of a track and its damped-cosine fit.
    FitAutocorr {
        input: PathBuf,
        #[arg(long, default_value = "omni", value_parser = parse_mode)]
        mode: TrackMode,
        #[command(flatten)]
        autocorr: AutocorrArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a track or scan from a synthesis spec.
    Generate {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full chain on a scan: fading and autocorrelation reports for omni and every azimuth.
    Report {
        input: PathBuf,
        #[command(flatten)]
        autocorr: AutocorrArgs,
        /// Directory receiving the report tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct AutocorrArgs {
    /// Largest lag in wavelengths.
    #[arg(long)]
    max_lag: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MIN_PAIRS)]
    min_pairs: usize,
    /// Fit with the oscillation rate fixed at zero.
    #[arg(long)]
    force_a_zero: bool,
}

impl AutocorrArgs {
    fn options(&self) -> AutocorrOptions {
        AutocorrOptions {
            max_lag: self.max_lag,
            min_pairs: self.min_pairs,
            ..Default::default()
        }
    }
}

fn parse_mode(s: &str) -> std::result::Result<TrackMode, String> {
    if s == "omni" {
        return Ok(TrackMode::Omni);
    }
    s.strip_prefix("az:")
        .and_then(|deg| deg.trim().parse::<i64>().ok())
        .map(|deg| TrackMode::Directional(Azimuth::new(deg)))
        .ok_or_else(|| format!("expected `omni` or `az:<deg>`, got `{s}`"))
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<O: Write, E: Write>(args: &[String], stdout: &mut O, stderr: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn stdout_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn emit<O: Write>(out: Option<&Path>, bytes: &[u8], stdout: &mut O) -> Result<()> {
    match out {
        Some(path) => io::write_text(path, bytes),
        None => stdout.write_all(bytes).map_err(stdout_err),
    }
}

/// Loads a track, or extracts one from a scan with `mode`.
fn load_track(path: &Path, mode: TrackMode) -> Result<(AmplitudeTrack, CarrierConfig)> {
    let name = path.display().to_string();
    match io::load_document(path)? {
        Document::Track(doc) => Ok((io::track_from_doc(&doc)?, CarrierConfig::default())),
        Document::Scan(doc) => {
            let scan = io::scan_from_doc(&doc, &name)?;
            Ok((scan_to_amplitude_track(&scan, mode, &PipelineConfig::default())?, scan.carrier()))
        }
        _ => Err(Error::Format {
            path: name,
            message: "expected a track or scan document".into(),
        }),
    }
}

fn execute<O: Write, E: Write>(cli: Cli, stdout: &mut O, stderr: &mut E) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Process { input, out } => {
            let scan = io::load_scan(&input)?;
            let mut buf = Vec::new();
            io::write_process_table(&mut buf, &scan, &PipelineConfig::default())?;
            emit(out.as_deref(), &buf, stdout)
        }
        Command::FitFading { input, mode, out } => {
            let (track, _) = load_track(&input, mode)?;
            let levels = amplitude_rel_db(&track);
            let fits = select_best_family(&levels)?;
            let mut buf = Vec::new();
            io::write_fading_report(&mut buf, &levels, &fits)?;
            emit(out.as_deref(), &buf, stdout)?;
            if out.is_some() {
                writeln!(stdout, "{}", fading_summary(&fits)).map_err(stdout_err)?;
            }
            Ok(())
        }
        Command::FitAutocorr {
            input,
            mode,
            autocorr,
            out,
        } => {
            let (track, carrier) = load_track(&input, mode)?;
            let (series, params, d_emp) = analyze_autocorr(&track, &autocorr)?;
            let mut buf = Vec::new();
            io::write_autocorr_report(&mut buf, &series, &params, d_emp, &carrier)?;
            emit(out.as_deref(), &buf, stdout)?;
            if out.is_some() {
                writeln!(stdout, "{}", autocorr_summary(&params, d_emp, &carrier)).map_err(stdout_err)?;
            }
            Ok(())
        }
        Command::Generate { spec, out } => {
            let name = spec.display().to_string();
            let bytes = match io::load_document(&spec)? {
                Document::TrackSpec(doc) => io::track_bytes(&generate_track(&doc.to_spec(seed)?)?),
                Document::ScanSpec(doc) => {
                    let scan = generate_scan(&doc.to_spec(seed)?, doc.geometry.geometry()?, doc.geometry.carrier()?)?;
                    io::scan_bytes(&scan)
                }
                _ => {
                    return Err(Error::Format {
                        path: name,
                        message: "expected a track_spec or scan_spec document".into(),
                    })
                }
            };
            emit(out.as_deref(), &bytes, stdout)
        }
        Command::Report { input, autocorr, out } => {
            let scan = io::load_scan(&input)?;
            report(&scan, &autocorr, out.as_deref(), stdout, stderr)
        }
    }
}

fn analyze_autocorr(track: &AmplitudeTrack, args: &AutocorrArgs) -> Result<(AutocorrSeries, DampedCosParams, Option<f64>)> {
    let series = autocorrelation(track, &args.options())?;
    let params = fit_damped_cos(&series, args.force_a_zero)?;
    let d_emp = decorrelation_empirical(&series);
    Ok((series, params, d_emp))
}

fn fading_summary(fits: &[FadingFit]) -> String {
    let params: Vec<String> = fits
        .iter()
        .map(|f| {
            let p = match f.family {
                FadingFamily::Ricean { k_db } => format!("K={k_db:.2} dB"),
                FadingFamily::LogNormalDb { sigma_db } => format!("sigma={sigma_db:.3} dB"),
                FadingFamily::Rayleigh => String::new(),
            };
            format!("{}[{p} ks={:.4}]", f.family.kind().name(), f.ks_stat)
        })
        .collect();
    format!("best={} {}", fits[0].family.kind().name(), params.join(" "))
}

fn autocorr_summary(p: &DampedCosParams, d_emp: Option<f64>, carrier: &CarrierConfig) -> String {
    let period = p
        .period
        .map(|t| format!("{t:.2} lambda ({:.2} cm)", carrier.wavelengths_to_cm(t)))
        .unwrap_or_else(|| "-".into());
    let d_emp = d_emp.map(|d| format!("{d:.2} lambda")).unwrap_or_else(|| "-".into());
    format!(
        "a={:.4} rad/lambda b={:.4} 1/lambda T={period} d={:.2} lambda ({:.2} cm) d_empirical={d_emp} extrapolated={}",
        p.a,
        p.b,
        p.decorrelation,
        carrier.wavelengths_to_cm(p.decorrelation),
        p.extrapolated
    )
}

fn ricean_k(fits: &[FadingFit]) -> f64 {
    fits.iter()
        .find_map(|f| match f.family {
            FadingFamily::Ricean { k_db } => Some(k_db),
            _ => None,
        })
        .unwrap_or(f64::NAN)
}

fn report<O: Write, E: Write>(
    scan: &TrackScan,
    args: &AutocorrArgs,
    out: Option<&Path>,
    stdout: &mut O,
    stderr: &mut E,
) -> Result<()> {
    let carrier = scan.carrier();
    let mut modes = vec![(TrackMode::Omni, "omni".to_string())];
    modes.extend(
        scan.azimuths()
            .into_iter()
            .map(|az| (TrackMode::Directional(az), format!("az{}", az.degrees()))),
    );
    let mut summary = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut summary);
        w.write_record(["track", "best_family", "ricean_k_db", "lognormal_sigma_db", "a", "b", "T", "d", "d_empirical", "extrapolated"])?;
        for (index, (mode, name)) in modes.iter().enumerate() {
            let result = (|| -> Result<_> {
                let track = scan_to_amplitude_track(scan, *mode, &PipelineConfig::default())?;
                let levels = amplitude_rel_db(&track);
                let fits = select_best_family(&levels)?;
                let (series, params, d_emp) = analyze_autocorr(&track, args)?;
                Ok((levels, fits, series, params, d_emp))
            })();
            let (levels, fits, series, params, d_emp) = match result {
                Ok(r) => r,
                // the omni track must succeed; a directional failure only skips that angle
                Err(e) if index > 0 => {
                    writeln!(stderr, "{name}: skipped: {e}").map_err(stdout_err)?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if let Some(dir) = out {
                let mut buf = Vec::new();
                io::write_fading_report(&mut buf, &levels, &fits)?;
                io::write_text(&dir.join(format!("{name}_fading.csv")), &buf)?;
                let mut buf = Vec::new();
                io::write_autocorr_report(&mut buf, &series, &params, d_emp, &carrier)?;
                io::write_text(&dir.join(format!("{name}_autocorr.csv")), &buf)?;
            }
            let sigma = fits
                .iter()
                .find_map(|f| match f.family {
                    FadingFamily::LogNormalDb { sigma_db } => Some(sigma_db),
                    _ => None,
                })
                .unwrap_or(f64::NAN);
            let k = ricean_k(&fits);
            w.write_record([
                name.clone(),
                fits[0].family.kind().name().to_string(),
                format!("{k}"),
                format!("{sigma}"),
                format!("{}", params.a),
                format!("{}", params.b),
                params.period.map(|t| format!("{t}")).unwrap_or_default(),
                format!("{}", params.decorrelation),
                d_emp.map(|d| format!("{d}")).unwrap_or_default(),
                params.extrapolated.to_string(),
            ])?;
            writeln!(
                stdout,
                "{name}: best={} K={k:.2} dB {}",
                fits[0].family.kind().name(),
                autocorr_summary(&params, d_emp, &carrier)
            )
            .map_err(stdout_err)?;
        }
        w.flush().map_err(stdout_err)?;
    }
    if let Some(dir) = out {
        io::write_text(&dir.join("summary.csv"), &summary)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("smallscale").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(parse_mode("omni").unwrap(), TrackMode::Omni);
        assert_eq!(parse_mode("az:270").unwrap(), TrackMode::Directional(Azimuth::new(270)));
        assert!(parse_mode("az:x").is_err());
        assert!(parse_mode("north").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        assert_eq!(run_args(&["fit-autocorr", "x.json", "--bogus"]).0, 2);
        assert_eq!(run_args(&["fit-autocorr"]).0, 2);
        assert_eq!(run_args(&["fit-fading", "x.json", "--mode", "up"]).0, 2);
        assert_eq!(run_args(&["--help"]).0, 0);
    }

    #[test]
    fn missing_file_is_validation_error() {
        let (code, _, err) = run_args(&["process", "/nonexistent/scan.json"]);
        assert_eq!(code, 3);
        assert!(err.contains("/nonexistent/scan.json"));
    }
}
