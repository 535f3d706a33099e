//! Command line front end.
//!
//! ```text
//! tracereg <command> [--flag value ...]
//!
//! commands:
//!   solve       run one estimator on a serialized operator and data vector
//!   constants   geometry constants and bounds for one operator
//!   tau-phase   separation-constant sweep over (m, n, r) with replications
//!   compare     estimator comparison under validation/oracle tuning
//!   spiked      spiked covariance recovery study
//!   checks      negative controls and limit checks (prop1|prop2|example1|prop4)
//!
//! global flags: --seed <u64> --out <dir> --config <file> --threads <k>
//!               --full-scale --quiet
//! ```
//!
//! Exit codes: 0 success, 1 validation error, 2 numeric failure.

mod args;
mod commands;
mod config;
mod ingest;

use tracereg::error::Error;

use crate::args::Params;

const USAGE: &str = "usage: tracereg <solve|constants|tau-phase|compare|spiked|checks> [--flags]

global flags:
  --seed <u64>       master seed (default 12345)
  --out <dir>        output directory (default tracereg-out)
  --config <file>    key = value config file; command line overrides it
  --threads <k>      worker threads for the sweeps
  --full-scale       use the full-size study grids instead of desk-scale ones
  --quiet            suppress progress output

run `tracereg <command> --help` for command flags.
";

fn command_help(command: &str) -> &'static str {
    match command {
        "solve" => {
            "tracereg solve --op <file> --y <file> --method <cls|ols|nucreg|tracereg|chen|spiked>
  [--lambda <f>] [--sigma-sq <f>]
  [--max-iters <k>] [--rel-obj-tol <f>] [--fp-tol <f>] [--no-accel] [--no-restart]
writes estimate.txt and report.txt\n"
        }
        "constants" => {
            "tracereg constants --m <m> (--ensemble <orthonormal|goe|wishart|block> --n <n> | --op <file>)
  [--q <order>] [--rank <r>] [--sigma <f>] [--tail-mu <f>] [--r-grid <list>]
  [--norm1-target <f>] [--zeta <f>] [--restarts <k>]
writes constants.txt (one `name value` per line)\n"
        }
        "tau-phase" => {
            "tracereg tau-phase [--m-list <list>] [--alpha-grid <list>] [--r-list <list>]
  [--reps <k>] [--q <order>] [--quantile <p>] [--zero-threshold <f>] [--fit]
writes tau_phase.csv (and tau_fit.csv, tau_fit_curves.csv with --fit)\n"
        }
        "compare" => {
            "tracereg compare [--m <m>] [--n-grid <list>] [--r-grid <list>] [--sigma <f>]
  [--reps <k>] [--lambda-factors <list>] [--chen-factors <list>]
writes compare.csv\n"
        }
        "spiked" => {
            "tracereg spiked [--m <m>] [--spikes <list>] [--sigma-sq <f>]
  [--c-grid <list>] [--beta-grid <list>] [--reps <k>]
  [--data <csv> --rank <r> [--mode covariance|correlation]]
writes spiked.csv\n"
        }
        "checks" => {
            "tracereg checks <prop1|prop2|example1|prop4> [--m <m>] [--reps/--trials <k>] ...
prints one PASS/FAIL line per check and writes checks.txt\n"
        }
        _ => USAGE,
    }
}

fn dispatch(argv: &[String]) -> Result<(), Error> {
    let Some(command) = argv.first() else {
        return Err(Error::InvalidInput("no command given".into()));
    };
    let command = command.as_str();
    match command {
        "solve" | "constants" | "tau-phase" | "compare" | "spiked" => {
            let params = Params::parse(command, &argv[1..])?;
            if params.flag("help") {
                print!("{}", command_help(command));
                return Ok(());
            }
            match command {
                "solve" => commands::cmd_solve(&params),
                "constants" => commands::cmd_constants(&params),
                "tau-phase" => commands::cmd_tau_phase(&params),
                "compare" => commands::cmd_compare(&params),
                "spiked" => commands::cmd_spiked(&params),
                _ => unreachable!(),
            }
        }
        "checks" => {
            let Some(suite) = argv.get(1).filter(|s| !s.starts_with("--")) else {
                return Err(Error::InvalidInput(
                    "checks needs a suite: prop1|prop2|example1|prop4".into(),
                ));
            };
            let params = Params::parse("checks", &argv[2..])?;
            if params.flag("help") {
                print!("{}", command_help("checks"));
                return Ok(());
            }
            commands::cmd_checks(suite, &params)
        }
        "--help" | "help" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(Error::InvalidInput(format!("unknown command `{other}`"))),
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = match dispatch(&argv) {
        Ok(()) => 0,
        Err(Error::NumericFailure(msg)) => {
            eprintln!("numeric failure: {msg}");
            2
        }
        Err(Error::InvalidInput(msg)) => {
            eprintln!("error: {msg}");
            eprint!("{USAGE}");
            1
        }
        Err(Error::Io(err)) => {
            eprintln!("io error: {err}");
            1
        }
    };
    std::process::exit(code);
}
