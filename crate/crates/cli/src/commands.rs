//! The four subcommands: distribution tables, moment curves, key-distribution
//! sessions, and parameter sweeps.

use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::Args;

use tmcc_core::attacks::AttackModel;
use tmcc_core::photon::{mean_photons, poisson_pmf, tmcc_pmf, variance, TruncationPolicy};
use tmcc_core::protocol::{
    bits_to_string, decision_threshold, error_factor, error_probability, estimate_error_rates,
    prob_zero, run_party, run_session, AbortReason, Role, SessionConfig, SessionOutcome,
    SessionTranscript, VerificationSummary,
};
use tmcc_core::rng::derive_seed;
use tmcc_core::transport::{TcpPipe, TransportError};
use tmcc_core::Amplitude;

use crate::config::{resolve, resolve_required, ConfigFile};
use crate::grid::parse_grid;
use crate::output::{emit, fmt_g12, Cell, OutputFormat, Table};
use crate::UsageError;

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

fn amplitude(lambda: f64) -> anyhow::Result<Amplitude> {
    Amplitude::new(lambda).map_err(|e| usage(e.to_string()))
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Field amplitude |λ| of the source.
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed truncation bound (default: automatic tail policy).
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Output format: csv or json.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Photon-number table for the TMCC beam and the mean-matched coherent
/// (Poisson) beam.
pub fn cmd_dist(args: DistArgs) -> anyhow::Result<ExitCode> {
    let config = ConfigFile::load(args.config.as_deref())?;
    let lambda = resolve_required(args.lambda, config.get("lambda"), "lambda")?;
    let n_max = match args.n_max {
        Some(n) => Some(n),
        None => config.get::<usize>("n-max")?,
    };
    let format = resolve(args.format, config.get("format"), OutputFormat::Csv)?;

    let policy = match n_max {
        Some(n) => TruncationPolicy::Fixed(n),
        None => TruncationPolicy::Auto,
    };
    let lambda = amplitude(lambda)?;
    let tmcc = tmcc_pmf(lambda, policy);
    let poisson =
        poisson_pmf(tmcc.mean(), policy).expect("pmf mean is finite and nonnegative");

    let mut rows = tmcc.n_max().max(poisson.n_max());
    // Trim trailing all-zero rows (λ = 0 collapses to the single n = 0 row).
    while rows > 0 && tmcc.prob(rows) == 0.0 && poisson.prob(rows) == 0.0 {
        rows -= 1;
    }

    let mut table = Table::new(vec!["n", "p_tmcc", "p_poisson"]);
    for n in 0..=rows {
        table.push(vec![
            Cell::Int(n as u64),
            Cell::Real(tmcc.prob(n)),
            Cell::Real(poisson.prob(n)),
        ]);
    }
    emit(&table.render(format), args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Amplitude grid: comma list (0.5,1,2) or range (0:10:0.1).
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Mean and dispersion curves: the TMCC variance against the coherent-beam
/// reference (variance equal to the mean).
pub fn cmd_moments(args: MomentsArgs) -> anyhow::Result<ExitCode> {
    let config = ConfigFile::load(args.config.as_deref())?;
    let spec: String = resolve_required(args.lambdas, config.get("lambdas"), "lambdas")?;
    let format = resolve(args.format, config.get("format"), OutputFormat::Csv)?;
    let grid = parse_grid(&spec).map_err(|e| usage(e.to_string()))?;

    let mut table = Table::new(vec!["lambda", "mean", "variance", "poisson_variance"]);
    for &value in &grid {
        let lambda = amplitude(value)?;
        let mean = mean_photons(lambda);
        table.push(vec![
            Cell::Real(value),
            Cell::Real(mean),
            Cell::Real(variance(lambda)),
            Cell::Real(mean),
        ]);
    }
    emit(&table.render(format), args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TransportKind {
    Loopback,
    Tcp,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "loopback" => Ok(TransportKind::Loopback),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!("unknown transport {other:?} (expected loopback or tcp)")),
        }
    }
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Field amplitude |λ| of the source.
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-mode noise-photon probability ε (default 0).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Key length in bits (even; default 1024).
    #[arg(long)]
    bits: Option<usize>,
    /// Shared quantum-source seed; both endpoints of a networked session
    /// must be given the same value (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Eavesdropper: none, beam-split:<t>, clone:poisson, clone:tmcc.
    #[arg(long)]
    attack: Option<String>,
    /// Distribution-test significance (default 0.01).
    #[arg(long)]
    significance: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// loopback (default) runs both parties in-process; tcp runs this
    /// process as one endpoint.
    #[arg(long)]
    transport: Option<String>,
    /// Which endpoint this process plays in tcp mode: alice or bob.
    #[arg(long)]
    role: Option<String>,
    /// Bind and accept the peer connection at this address (tcp mode).
    #[arg(long)]
    listen: Option<String>,
    /// Connect to the listening peer at this address (tcp mode).
    #[arg(long)]
    connect: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Runs one key-distribution session and writes its transcript.
/// Exit codes: 0 accepted, 3 transport abort, 4 verification abort,
/// 5 eavesdropping suspected.
pub fn cmd_session(args: SessionArgs) -> anyhow::Result<ExitCode> {
    let config_file = ConfigFile::load(args.config.as_deref())?;
    let lambda = resolve_required(args.lambda, config_file.get("lambda"), "lambda")?;
    let epsilon = resolve(args.epsilon, config_file.get("epsilon"), 0.0)?;
    let key_bits = resolve(args.bits, config_file.get("bits"), 1024)?;
    let seed = resolve(args.seed, config_file.get("seed"), 0)?;
    let significance = resolve(args.significance, config_file.get("significance"), 0.01)?;
    let format = resolve(args.format, config_file.get("format"), OutputFormat::Csv)?;
    let attack_spec: String = resolve(args.attack, config_file.get("attack"), "none".into())?;
    let transport_spec: String =
        resolve(args.transport, config_file.get("transport"), "loopback".into())?;
    let role_spec: Option<String> = match args.role {
        Some(r) => Some(r),
        None => config_file.get("role")?,
    };
    let listen = match args.listen {
        Some(l) => Some(l),
        None => config_file.get("listen")?,
    };
    let connect = match args.connect {
        Some(c) => Some(c),
        None => config_file.get("connect")?,
    };

    let attack = AttackModel::from_str(&attack_spec).map_err(|e| usage(e.to_string()))?;
    let transport = TransportKind::from_str(&transport_spec).map_err(usage)?;

    let session = SessionConfig {
        lambda: amplitude(lambda)?,
        epsilon,
        key_bits,
        seed,
        detection_significance: significance,
        attack,
    };
    session.validate().map_err(|e| usage(e.to_string()))?;

    let transcript = match transport {
        TransportKind::Loopback => {
            if role_spec.is_some() || listen.is_some() || connect.is_some() {
                return Err(usage(
                    "--role/--listen/--connect apply only with --transport tcp",
                ));
            }
            run_session(&session)?
        }
        TransportKind::Tcp => {
            let role = role_spec
                .ok_or_else(|| usage("tcp transport requires --role alice|bob"))?
                .parse::<Role>()
                .map_err(usage)?;
            let pipe = match (listen, connect) {
                (Some(addr), None) => {
                    let listener = TcpListener::bind(&addr)
                        .map_err(TransportError::Io)
                        .with_context(|| format!("cannot listen on {addr}"))?;
                    let local = listener.local_addr().map_err(TransportError::Io)?;
                    eprintln!("listening on {local}");
                    let (stream, peer) = listener.accept().map_err(TransportError::Io)?;
                    eprintln!("peer connected from {peer}");
                    TcpPipe::new(stream)?
                }
                (None, Some(addr)) => connect_with_retry(&addr)?,
                _ => {
                    return Err(usage(
                        "tcp transport requires exactly one of --listen or --connect",
                    ))
                }
            };
            run_party(role, &session, pipe)?
        }
    };

    let rendered = match format {
        OutputFormat::Csv => transcript_csv(&transcript),
        OutputFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(&transcript).expect("transcript serializes");
            text.push('\n');
            text
        }
    };
    emit(&rendered, args.output.as_deref())?;

    match &transcript.outcome {
        SessionOutcome::Accepted => {
            eprintln!("session {}: accepted", transcript.session_id);
            Ok(ExitCode::SUCCESS)
        }
        SessionOutcome::Aborted { reason } => {
            eprintln!(
                "session {}: aborted ({})",
                transcript.session_id,
                reason.label()
            );
            Ok(ExitCode::from(match reason {
                AbortReason::Transport { .. } => 3,
                AbortReason::Verification => 4,
                AbortReason::EavesdroppingSuspected => 5,
            }))
        }
    }
}

fn connect_with_retry(addr: &str) -> anyhow::Result<TcpPipe> {
    let mut last = None;
    for _ in 0..40 {
        match TcpPipe::connect(addr) {
            Ok(pipe) => return Ok(pipe),
            Err(e) => {
                last = Some(e);
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
    Err(anyhow::Error::new(last.expect("at least one attempt")))
        .with_context(|| format!("cannot connect to {addr}"))
}

/// The flat transcript format: the per-bit table, a blank line, then the
/// session summary as field,value rows. Field names are normative.
fn transcript_csv(t: &SessionTranscript) -> String {
    let mut out = String::from("index,base_count,alice_count,bob_count,alice_bit,bob_bit\n");
    for r in &t.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.index,
            r.counts.base_count,
            r.counts.alice_count,
            r.counts.bob_count,
            u8::from(r.alice_bit),
            u8::from(r.bob_bit),
        ));
    }
    out.push('\n');
    out.push_str("field,value\n");

    let (outcome, abort_reason, abort_detail) = match &t.outcome {
        SessionOutcome::Accepted => ("accepted", "", String::new()),
        SessionOutcome::Aborted { reason } => (
            "aborted",
            reason.label(),
            match reason {
                AbortReason::Transport { detail } => detail.clone(),
                _ => String::new(),
            },
        ),
    };
    let (verification, differing) = match &t.verification {
        None => ("incomplete", String::new()),
        Some(VerificationSummary::Match) => ("match", "0".into()),
        Some(VerificationSummary::Mismatch { differing }) => ("mismatch", differing.to_string()),
    };

    let mut push = |field: &str, value: String| {
        // Only abort_detail can carry free text; quote any value that would
        // break the CSV shape.
        let needs_quoting = value.contains([',', '"', '\n']);
        out.push_str(field);
        out.push(',');
        if needs_quoting {
            out.push('"');
            out.push_str(&value.replace('"', "\"\""));
            out.push('"');
        } else {
            out.push_str(&value);
        }
        out.push('\n');
    };
    push("outcome", outcome.into());
    push("abort_reason", abort_reason.into());
    push("abort_detail", abort_detail);
    push("session_id", t.session_id.clone());
    push("lambda", fmt_g12(t.config.lambda.magnitude()));
    push("epsilon", fmt_g12(t.config.epsilon));
    push("key_bits", t.config.key_bits.to_string());
    push("seed", t.config.seed.to_string());
    push("threshold", t.threshold.to_string());
    push("attack", t.config.attack.to_string());
    push("significance", fmt_g12(t.config.detection_significance));
    push("verification", verification.into());
    push("verification_differing", differing);
    for (name, report) in [("alice", &t.alice_detection), ("bob", &t.bob_detection)] {
        match report {
            Some(r) => {
                push(&format!("{name}_detection_passed"), r.passed.to_string());
                push(&format!("{name}_detection_statistic"), fmt_g12(r.statistic));
                push(
                    &format!("{name}_detection_dof"),
                    r.degrees_of_freedom.to_string(),
                );
                push(&format!("{name}_detection_p_value"), fmt_g12(r.p_value));
            }
            None => {
                push(&format!("{name}_detection_passed"), "skipped".into());
                push(&format!("{name}_detection_statistic"), String::new());
                push(&format!("{name}_detection_dof"), String::new());
                push(&format!("{name}_detection_p_value"), String::new());
            }
        }
    }
    push("alice_key", bits_to_string(&t.alice_key));
    push("bob_key", bits_to_string(&t.bob_key));
    out
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Amplitude grid: comma list or start:stop:step.
    #[arg(long)]
    lambdas: Option<String>,
    /// Noise-factor grid: comma list or start:stop:step.
    #[arg(long)]
    epsilons: Option<String>,
    /// Monte-Carlo bits per (λ, ε) cell (default 10000).
    #[arg(long = "bits-per-cell")]
    bits_per_cell: Option<u64>,
    /// Base seed; each cell derives its own sub-seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Analytic error quantities plus Monte-Carlo estimates over a (λ, ε) grid.
pub fn cmd_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let config = ConfigFile::load(args.config.as_deref())?;
    let lambda_spec: String = resolve_required(args.lambdas, config.get("lambdas"), "lambdas")?;
    let epsilon_spec: String = resolve_required(args.epsilons, config.get("epsilons"), "epsilons")?;
    let bits = resolve(args.bits_per_cell, config.get("bits-per-cell"), 10_000)?;
    let seed = resolve(args.seed, config.get("seed"), 0)?;
    let format = resolve(args.format, config.get("format"), OutputFormat::Csv)?;

    let lambdas = parse_grid(&lambda_spec).map_err(|e| usage(e.to_string()))?;
    let epsilons = parse_grid(&epsilon_spec).map_err(|e| usage(e.to_string()))?;
    for &e in &epsilons {
        if e > 1.0 {
            return Err(usage(format!("epsilon {e} exceeds 1")));
        }
    }

    let mut table = Table::new(vec![
        "lambda",
        "epsilon",
        "threshold",
        "p_zero",
        "error_factor",
        "p_err",
        "empirical_conditional_error",
        "empirical_mismatch_rate",
    ]);
    let mut cell = 0u64;
    for &l in &lambdas {
        let lambda = amplitude(l)?;
        for &e in &epsilons {
            let rates = estimate_error_rates(lambda, e, bits, derive_seed(seed, cell))
                .map_err(|err| anyhow!(err.to_string()))?;
            table.push(vec![
                Cell::Real(l),
                Cell::Real(e),
                Cell::Int(u64::from(decision_threshold(lambda))),
                Cell::Real(prob_zero(lambda)),
                Cell::Real(error_factor(lambda)),
                Cell::Real(error_probability(lambda, e)),
                Cell::Real(rates.conditional_error()),
                Cell::Real(rates.mismatch_rate()),
            ]);
            cell += 1;
        }
    }
    emit(&table.render(format), args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}
