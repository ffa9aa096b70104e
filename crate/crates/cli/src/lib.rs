//! Commands behind the `netpomdp` binary. Each command writes its report to
//! the given streams and returns the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use netpomdp_core::net::MessageKind;
use netpomdp_core::scenario::{ScenarioError, ScenarioFile};
use netpomdp_core::solver::{
    check_contraction, check_monotonicity, check_pf_utility, fixed_point_uniqueness, run_decentralized_bp,
    DiagnosticReport, Scenario, SimulationConfig, TraceEvent,
};
use netpomdp_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Invariant failure or rejected configuration.
    pub const INVALID: i32 = 1;
    /// Unreadable or unparsable scenario file.
    pub const PARSE: i32 = 2;
    /// The run hit `max_rounds` without converging.
    pub const NOT_CONVERGED: i32 = 3;
    /// A belief update failed during the run.
    pub const BELIEF_UPDATE: i32 = 4;
    /// A diagnostic found violations.
    pub const DIAGNOSE: i32 = 5;
}

/// Stations and slots of the random trajectories in the utility check.
const PF_STATIONS: usize = 3;
const PF_SLOTS: usize = 100;

/// Command-line values that replace the scenario file's `[simulation]`
/// entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_rounds: Option<usize>,
    pub epsilon: Option<f64>,
    pub message_type: Option<MessageKind>,
    pub discount: Option<f64>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SimulationConfig) {
        if let Some(x) = self.seed {
            cfg.seed = x;
        }
        if let Some(x) = self.max_rounds {
            cfg.max_rounds = x;
        }
        if let Some(x) = self.epsilon {
            cfg.epsilon = x;
        }
        if let Some(x) = self.message_type {
            cfg.message_type = x;
        }
        if let Some(x) = self.discount {
            cfg.discount = x;
        }
        if let Some(x) = self.workers {
            cfg.workers = x;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    /// Scenario whose `[simulation]` section supplies the discount and
    /// convergence threshold.
    pub config: Option<PathBuf>,
    pub trials: usize,
    pub overrides: Overrides,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            config: None,
            trials: 1000,
            overrides: Overrides::default(),
        }
    }
}

fn scenario_exit(e: &ScenarioError) -> i32 {
    match e {
        ScenarioError::Io(_) | ScenarioError::Parse(_) => exit::PARSE,
        ScenarioError::Invalid(_) => exit::INVALID,
    }
}

/// Loads the file, applies the overrides and builds the scenario.
pub fn load(path: &Path, overrides: &Overrides) -> Result<(SimulationConfig, Scenario), ScenarioError> {
    let mut file = ScenarioFile::load(path)?;
    overrides.apply(&mut file.simulation);
    let scenario = file.build()?;
    Ok((file.simulation, scenario))
}

/// Checks the scenario file and lists every violation found.
pub fn cmd_validate(path: &Path, overrides: &Overrides, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match load(path, overrides) {
        Ok((_, scenario)) => {
            let states: Vec<usize> = scenario.agents.iter().map(|a| a.frame.space().len()).collect();
            let _ = writeln!(
                out,
                "{}: valid, {} agents, interactive states per agent {states:?}",
                path.display(),
                scenario.agents.len()
            );
            exit::OK
        }
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            scenario_exit(&e)
        }
    }
}

/// Runs the scenario, writing one trace line per message, agent round and
/// the final summary to `trace_out`. The summary line also goes to `out`.
pub fn cmd_run(
    path: &Path,
    overrides: &Overrides,
    trace_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let (cfg, scenario) = match load(path, overrides) {
        Ok(x) => x,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            return scenario_exit(&e);
        }
    };
    let mut trace = match trace_out.map(File::create).transpose() {
        Ok(f) => f.map(BufWriter::new),
        Err(e) => {
            let _ = writeln!(err, "cannot create trace file: {e}");
            return exit::INVALID;
        }
    };
    let mut write_error = None;
    let mut sink = |event: &TraceEvent| {
        if let Some(w) = trace.as_mut() {
            if let Err(e) = writeln!(w, "{}", event.to_json_line()) {
                write_error.get_or_insert(e);
            }
        }
    };
    let result = run_decentralized_bp(&cfg, &scenario, &mut sink);
    if let Some(w) = trace.as_mut() {
        if let Err(e) = w.flush() {
            write_error.get_or_insert(e);
        }
    }
    if let Some(e) = write_error {
        let _ = writeln!(err, "cannot write trace: {e}");
        return exit::INVALID;
    }
    match result {
        Ok(outcome) => {
            let _ = writeln!(out, "{}", TraceEvent::Summary(outcome.summary.clone()).to_json_line());
            if outcome.summary.converged {
                exit::OK
            } else {
                let _ = writeln!(
                    err,
                    "no convergence after {} rounds, last max value change {}",
                    outcome.summary.rounds, outcome.summary.final_max_delta
                );
                exit::NOT_CONVERGED
            }
        }
        Err(e @ Error::BeliefUpdate { .. }) => {
            let _ = writeln!(err, "run aborted: {e}");
            exit::BELIEF_UPDATE
        }
        Err(e) => {
            let _ = writeln!(err, "run failed: {e}");
            exit::INVALID
        }
    }
}

fn report_line(r: &DiagnosticReport) -> String {
    let mut line = format!("{}: {} trials, {} violations", r.name, r.trials, r.violations.len());
    if let Some(m) = r.max_ratio {
        if r.name == "contraction" {
            line.push_str(&format!(", max ratio {m:.12}"));
        } else {
            line.push_str(&format!(", max residual {m:.3e}"));
        }
    }
    line
}

/// Runs the monotonicity, contraction, fixed-point and utility checks with
/// `opts.trials` random trials each.
pub fn cmd_diagnose(opts: &DiagnoseOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut cfg = match &opts.config {
        Some(path) => match ScenarioFile::load(path) {
            Ok(f) => f.simulation,
            Err(e) => {
                let _ = writeln!(err, "{}: {e}", path.display());
                return scenario_exit(&e);
            }
        },
        None => SimulationConfig::default(),
    };
    opts.overrides.apply(&mut cfg);
    let problems = cfg.violations();
    if !problems.is_empty() {
        let _ = writeln!(err, "invalid configuration:\n  {}", problems.join("\n  "));
        return exit::INVALID;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, gamma) = (opts.trials, cfg.discount);
    let reports = (|| -> netpomdp_core::Result<Vec<DiagnosticReport>> {
        Ok(vec![
            check_monotonicity(n, &mut rng, gamma)?,
            check_contraction(n, &mut rng, gamma)?,
            fixed_point_uniqueness(n, &mut rng, gamma, cfg.epsilon)?,
            check_pf_utility(n, &mut rng, PF_STATIONS, PF_SLOTS)?,
        ])
    })();
    let reports = match reports {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "diagnostics failed: {e}");
            return exit::INVALID;
        }
    };
    let mut failed = false;
    for r in &reports {
        let _ = writeln!(out, "{}", report_line(r));
        for v in &r.violations {
            let _ = writeln!(err, "{} counterexample: {v}", r.name);
        }
        failed |= !r.passed();
    }
    if failed {
        exit::DIAGNOSE
    } else {
        exit::OK
    }
}
