//! Command implementations for the `gridcheck` binary.
//!
//! Every command prints one deterministic JSON report to stdout and exits
//! with a contract code scripts can branch on:
//!
//! - 0: pass / converged
//! - 1: condition failed / not converged
//! - 2: input error (unreadable file, malformed JSON, invalid grid)
//! - 3: condition inapplicable (hierarchy violated, budget exceeded,
//!   singular system)
//!
//! The margin for strict inequalities defaults to 1e-9 and can be overridden
//! with `--epsilon` or the `GRIDCHECK_EPSILON` environment variable.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use gridcheck_core::feasibility::{check_thm1, check_thm6};
use gridcheck_core::formats::{GridFile, InterconnectionFile, LedgerFile};
use gridcheck_core::report::{self, Json};
use gridcheck_core::solver::{solve_diagonal_exact, solve_power_flow, SolveStatus, SolverOptions};
use gridcheck_core::{
    apply_virtual_shunts, check_hierarchy_assumption, AttachCandidate, AttachError, CertifiedGrid,
    DEFAULT_EPSILON,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INAPPLICABLE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "gridcheck",
    version,
    about = "Feasibility certificates and plug-and-play interconnection checks \
             for resistive DC grids with constant-power loads"
)]
pub struct Cli {
    /// Margin for strict inequalities (overrides GRIDCHECK_EPSILON).
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    Thm1,
    Thm6,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a grid file's structure and its hierarchy assumption.
    Validate { grid: PathBuf },

    /// Evaluate a feasibility certificate on a grid file.
    Check {
        grid: PathBuf,
        /// Which certificate to evaluate.
        #[arg(long, value_enum)]
        condition: ConditionArg,
        /// Evaluate the virtual grid: unconsumed shunt capacity is added to
        /// the load diagonal first.
        #[arg(long = "virtual")]
        virtual_grid: bool,
        /// Ledger with consumed amounts (default: nothing consumed yet).
        #[arg(long)]
        ledger: Option<PathBuf>,
    },

    /// Admit a microgrid onto a certified grid and write the merged grid.
    Attach {
        grid: PathBuf,
        ledger: PathBuf,
        microgrid: PathBuf,
        spec: PathBuf,
        /// Where to write the merged grid on a passing admission.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the merged ledger (default: `<out stem>.ledger.json`
        /// next to --out).
        #[arg(long)]
        out_ledger: Option<PathBuf>,
    },

    /// Solve the power flow equation numerically.
    Solve {
        grid: PathBuf,
        /// Stop when successive iterates differ by less than this.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
}

pub struct CommandOutput {
    pub report: Json,
    pub exit_code: i32,
}

pub fn run(args: &[String]) -> Result<CommandOutput, clap::Error> {
    let cli = Cli::try_parse_from(args)?;
    let echo = args.join(" ");
    let epsilon = match resolve_epsilon(cli.epsilon) {
        Ok(e) => e,
        Err(message) => {
            return Ok(finish(
                base_doc(&echo, "epsilon"),
                Some(message),
                EXIT_INPUT,
            ));
        }
    };
    Ok(match cli.command {
        Command::Validate { grid } => cmd_validate(&echo, &grid),
        Command::Check {
            grid,
            condition,
            virtual_grid,
            ledger,
        } => cmd_check(
            &echo,
            &grid,
            condition,
            virtual_grid,
            ledger.as_deref(),
            epsilon,
        ),
        Command::Attach {
            grid,
            ledger,
            microgrid,
            spec,
            out,
            out_ledger,
        } => cmd_attach(
            &echo,
            &grid,
            &ledger,
            &microgrid,
            &spec,
            &out,
            out_ledger.as_deref(),
            epsilon,
        ),
        Command::Solve {
            grid,
            tol,
            max_iter,
        } => cmd_solve(&echo, &grid, tol, max_iter),
    })
}

fn resolve_epsilon(flag: Option<f64>) -> Result<f64, String> {
    if let Some(e) = flag {
        return Ok(e);
    }
    match std::env::var("GRIDCHECK_EPSILON") {
        Ok(text) => text
            .parse::<f64>()
            .map_err(|_| format!("GRIDCHECK_EPSILON is not a number: {text:?}")),
        Err(_) => Ok(DEFAULT_EPSILON),
    }
}

fn base_doc(echo: &str, subcommand: &str) -> Json {
    Json::object()
        .field("tool", Json::str("gridcheck"))
        .field("command", Json::str(echo))
        .field("subcommand", Json::str(subcommand))
}

fn finish(doc: Json, error: Option<String>, exit_code: i32) -> CommandOutput {
    let report = doc
        .field(
            "error",
            match error {
                Some(msg) => Json::str(msg),
                None => Json::Null,
            },
        )
        .field("exit_status", Json::Int(exit_code as i64));
    CommandOutput { report, exit_code }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_candidate(path: &Path) -> Result<AttachCandidate, String> {
    let file: GridFile = read_json(path)?;
    file.to_candidate()
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn grid_summary(candidate: &AttachCandidate) -> Json {
    let loads = candidate.grid.load_count();
    let sources = candidate.grid.source_count();
    Json::object()
        .field("nodes", Json::Int((loads + sources) as i64))
        .field("loads", Json::Int(loads as i64))
        .field("sources", Json::Int(sources as i64))
        .field("lines", Json::Int(candidate.graph.lines().len() as i64))
        .field(
            "microgrids",
            Json::Int(candidate.grid.microgrid_count() as i64),
        )
}

fn cmd_validate(echo: &str, grid_path: &Path) -> CommandOutput {
    let doc = base_doc(echo, "validate").field("grid", Json::str(grid_path.display().to_string()));
    let candidate = match load_candidate(grid_path) {
        Ok(c) => c,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };
    let hierarchy = check_hierarchy_assumption(&candidate.grid, &candidate.graph);
    let code = if hierarchy.pass {
        EXIT_PASS
    } else {
        EXIT_INAPPLICABLE
    };
    let doc = doc
        .field("summary", grid_summary(&candidate))
        .field("hierarchy", report::hierarchy_report(&hierarchy));
    finish(doc, None, code)
}

fn cmd_check(
    echo: &str,
    grid_path: &Path,
    condition: ConditionArg,
    virtual_grid: bool,
    ledger_path: Option<&Path>,
    epsilon: f64,
) -> CommandOutput {
    let doc = base_doc(echo, "check")
        .field("grid", Json::str(grid_path.display().to_string()))
        .field(
            "condition",
            Json::str(match condition {
                ConditionArg::Thm1 => "thm1",
                ConditionArg::Thm6 => "thm6",
            }),
        )
        .field("virtual", Json::Bool(virtual_grid))
        .field("epsilon", Json::Float(epsilon));

    let candidate = match load_candidate(grid_path) {
        Ok(c) => c,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };
    let ledger = match ledger_path {
        None => candidate.ledger.clone(),
        Some(path) => {
            let file: LedgerFile = match read_json(path) {
                Ok(f) => f,
                Err(message) => return finish(doc, Some(message), EXIT_INPUT),
            };
            match file.to_ledger_checked(&candidate.ledger) {
                Ok(l) => l,
                Err(e) => return finish(doc, Some(format!("{}: {e}", path.display())), EXIT_INPUT),
            }
        }
    };

    let grid_eval = if virtual_grid {
        match apply_virtual_shunts(&candidate.grid, &ledger) {
            Ok(g) => g,
            Err(e) => return finish(doc, Some(e.to_string()), EXIT_INPUT),
        }
    } else {
        candidate.grid.clone()
    };
    let doc = doc.field("ledger", report::ledger(&ledger));

    let result = match condition {
        ConditionArg::Thm1 => check_thm1(&grid_eval, epsilon),
        ConditionArg::Thm6 => {
            check_thm6(&grid_eval, &candidate.graph, epsilon).map(|(report, _)| report)
        }
    };
    match result {
        Ok(r) => {
            let code = if r.pass { EXIT_PASS } else { EXIT_FAIL };
            finish(
                doc.field("report", report::feasibility_report(&r)),
                None,
                code,
            )
        }
        Err(e) => finish(
            doc.field("report", Json::Null),
            Some(e.to_string()),
            EXIT_INAPPLICABLE,
        ),
    }
}

fn default_ledger_path(out: &Path) -> PathBuf {
    match out.file_stem() {
        Some(stem) => out.with_file_name(format!("{}.ledger.json", stem.to_string_lossy())),
        None => out.with_extension("ledger.json"),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_attach(
    echo: &str,
    grid_path: &Path,
    ledger_path: &Path,
    microgrid_path: &Path,
    spec_path: &Path,
    out: &Path,
    out_ledger: Option<&Path>,
    epsilon: f64,
) -> CommandOutput {
    let doc = base_doc(echo, "attach")
        .field("grid", Json::str(grid_path.display().to_string()))
        .field("ledger", Json::str(ledger_path.display().to_string()))
        .field("microgrid", Json::str(microgrid_path.display().to_string()))
        .field("spec", Json::str(spec_path.display().to_string()))
        .field("epsilon", Json::Float(epsilon));

    let loaded = match load_candidate(grid_path) {
        Ok(c) => c,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };
    let ledger_file: LedgerFile = match read_json(ledger_path) {
        Ok(f) => f,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };
    let ledger = match ledger_file.to_ledger_checked(&loaded.ledger) {
        Ok(l) => l,
        Err(e) => {
            return finish(
                doc,
                Some(format!("{}: {e}", ledger_path.display())),
                EXIT_INPUT,
            )
        }
    };
    let grid_candidate = match AttachCandidate::new(loaded.graph, loaded.grid, ledger) {
        Ok(c) => c,
        Err(e) => return finish(doc, Some(e.to_string()), EXIT_INPUT),
    };
    let microgrid = match load_candidate(microgrid_path) {
        Ok(c) => c,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };
    let spec_file: InterconnectionFile = match read_json(spec_path) {
        Ok(f) => f,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };
    let spec = match spec_file.to_spec() {
        Ok(s) => s,
        Err(e) => return finish(doc, Some(e.to_string()), EXIT_INPUT),
    };

    let certified = match CertifiedGrid::establish(grid_candidate, epsilon) {
        Ok(c) => c,
        Err(e) => {
            return finish(
                doc.field("grid_certificate", Json::Null),
                Some(format!("establishing the grid's certificate: {e}")),
                EXIT_INAPPLICABLE,
            )
        }
    };
    let doc = doc.field(
        "grid_certificate",
        report::feasibility_report(certified.certificate()),
    );
    if !certified.is_certified() {
        return finish(
            doc,
            Some("the grid's own certificate does not pass; nothing can be attached".into()),
            EXIT_INAPPLICABLE,
        );
    }

    match certified.attach(&microgrid, &spec, epsilon) {
        Ok(attachment) => {
            let mut doc = doc
                .field("hat_shunts", report::hat_shunts(&attachment.hat))
                .field("assumption9", report::assumption9(&attachment.assumption9))
                .field("admission", report::feasibility_report(&attachment.report))
                .field(
                    "merged_certificate",
                    report::feasibility_report(&attachment.merged_report),
                );
            if let Some(merged) = &attachment.merged {
                let id_map = Json::Array(
                    merged
                        .id_map
                        .iter()
                        .map(|(&from, &to)| {
                            Json::object()
                                .field("from", Json::Int(from as i64))
                                .field("to", Json::Int(to as i64))
                        })
                        .collect(),
                );
                let ledger_out = out_ledger
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| default_ledger_path(out));
                let grid_file = GridFile::from_parts(
                    merged.certified.graph(),
                    merged.certified.grid(),
                    merged.certified.ledger(),
                );
                let ledger_file = LedgerFile::from_ledger(merged.certified.ledger());
                let mut write_error = None;
                for (path, text) in [
                    (
                        out,
                        serde_json::to_string_pretty(&grid_file).unwrap() + "\n",
                    ),
                    (
                        ledger_out.as_path(),
                        serde_json::to_string_pretty(&ledger_file).unwrap() + "\n",
                    ),
                ] {
                    if let Err(e) = std::fs::write(path, text) {
                        write_error = Some(format!("{}: {e}", path.display()));
                    }
                }
                doc = doc
                    .field("id_map", id_map)
                    .field(
                        "outputs",
                        Json::object()
                            .field("grid", Json::str(out.display().to_string()))
                            .field("ledger", Json::str(ledger_out.display().to_string())),
                    )
                    .field("ledger_after", report::ledger(merged.certified.ledger()));
                if let Some(message) = write_error {
                    return finish(doc, Some(message), EXIT_INPUT);
                }
                finish(doc, None, EXIT_PASS)
            } else {
                finish(doc, None, EXIT_FAIL)
            }
        }
        Err(AttachError::BudgetExceeded { over, report }) => finish(
            doc.field("assumption9", report::assumption9(&report)),
            Some(format!("shunt budget exceeded at nodes {over:?}")),
            EXIT_INAPPLICABLE,
        ),
        Err(AttachError::HierarchyFailed { failing, report }) => finish(
            doc.field("assumption9", report::assumption9(&report)),
            Some(format!(
                "merged grid violates the hierarchy assumption at nodes {failing:?}"
            )),
            EXIT_INAPPLICABLE,
        ),
        Err(AttachError::Input(e)) => finish(doc, Some(e.to_string()), EXIT_INPUT),
        Err(e) => finish(doc, Some(e.to_string()), EXIT_INAPPLICABLE),
    }
}

fn cmd_solve(
    echo: &str,
    grid_path: &Path,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> CommandOutput {
    let defaults = SolverOptions::default();
    let options = SolverOptions {
        step_tol: tol.unwrap_or(defaults.step_tol),
        residual_tol: defaults.residual_tol,
        max_iter: max_iter.unwrap_or(defaults.max_iter),
    };
    let doc = base_doc(echo, "solve")
        .field("grid", Json::str(grid_path.display().to_string()))
        .field("tol", Json::Float(options.step_tol))
        .field("max_iter", Json::Int(options.max_iter as i64));

    let candidate = match load_candidate(grid_path) {
        Ok(c) => c,
        Err(message) => return finish(doc, Some(message), EXIT_INPUT),
    };

    // On load-decoupled grids the per-row closed form decides feasibility
    // exactly; include it whenever it applies.
    let exact = solve_diagonal_exact(&candidate.grid).ok();
    let exact_json = match &exact {
        Some(e) => report::diagonal_exact(e, candidate.grid.load_ids()),
        None => Json::Null,
    };

    match solve_power_flow(&candidate.grid, &options) {
        Ok(outcome) => {
            let code = if outcome.status == SolveStatus::Converged {
                EXIT_PASS
            } else {
                EXIT_FAIL
            };
            let note = match (&exact, outcome.status) {
                (Some(e), status) if !e.feasible && status != SolveStatus::Converged => {
                    Some(format!(
                        "load rows are decoupled and the discriminant is negative at nodes \
                         {:?}: the power flow equation has no positive solution",
                        e.infeasible_nodes
                    ))
                }
                _ => None,
            };
            finish(
                doc.field(
                    "solve",
                    report::solve_outcome(&outcome, candidate.grid.load_ids()),
                )
                .field("diagonal_exact", exact_json),
                note,
                code,
            )
        }
        Err(e) => finish(
            doc.field("solve", Json::Null)
                .field("diagonal_exact", exact_json),
            Some(e.to_string()),
            EXIT_INAPPLICABLE,
        ),
    }
}
