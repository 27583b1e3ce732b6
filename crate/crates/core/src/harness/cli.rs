//! The `reserve-match` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::choice::slot::convert_instance;
use crate::cop::{cop_outcome, run_cop, ProposalOrder};
use crate::error::{Error, Result};
use crate::harness::audit::{run_audit, rigid_version, worker_pool, AuditConfig, Caps};
use crate::harness::generate::{generate_batch, generate_slot_specific, stream, GeneratorParams, SchemeFamily};
use crate::harness::io::{instance_to_json, load_allocation, load_any, load_instance, slot_specific_to_json, LoadedInstance};
use crate::harness::report::{
    compare_report, match_report, render_audit, render_compare, render_match, render_verify, to_machine, verify_report,
};
use crate::incentives::flexibility::{check_flexibility_pareto, DEFAULT_MAX_UNIT_STEPS};
use crate::instance::ProblemInstance;
use crate::verify::{is_stable, DEFAULT_BLOCKING_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Dynamic,
    SlotSpecific,
}

#[derive(Debug, Parser)]
#[command(name = "reserve-match", version, about = "School choice with dynamic reserves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output style.
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    /// Reports: also save the machine-readable form here. Instances: write
    /// here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub max_students: usize,
    #[arg(long, default_value_t = 2)]
    pub max_schools: usize,
    #[arg(long, default_value_t = 3)]
    pub max_types: usize,
    #[arg(long, default_value_t = 3)]
    pub max_capacity: u32,
    /// Most contracts any single school may receive.
    #[arg(long, default_value_t = 8)]
    pub max_contracts: usize,
    #[arg(long, value_enum, default_value = "mixed")]
    pub scheme: SchemeFamily,
}

impl GenArgs {
    fn params(&self) -> std::result::Result<GeneratorParams, String> {
        let d = GeneratorParams::default();
        let p = GeneratorParams {
            students: (1, self.max_students),
            schools: (1, self.max_schools),
            types: (1, self.max_types),
            capacity: (d.capacity.0.min(self.max_capacity), self.max_capacity),
            max_contracts_per_school: self.max_contracts,
            scheme: self.scheme,
            seed: self.seed,
            ..d
        };
        p.check()?;
        Ok(p)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the cumulative offer process on an instance.
    Match {
        instance: PathBuf,
        /// Propose in a random order drawn from this seed instead of the
        /// canonical one.
        #[arg(long)]
        order_seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Check that an allocation is stable.
    Verify {
        instance: PathBuf,
        allocation: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BLOCKING_CAP)]
        blocking_cap: u128,
        #[command(flatten)]
        output: Output,
    },
    /// Check an instance file and report every problem found.
    Validate {
        instance: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Run every property suite on random instances or on the given files.
    Audit {
        instances: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        order_trials: usize,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Compare outcomes under a rigid and a more flexible scheme.
    Compare {
        /// The less flexible instance, or the only one with --rigid.
        instance: PathBuf,
        /// The more flexible instance over the same market.
        flexible: Option<PathBuf>,
        /// Compare the instance with its own rigid version.
        #[arg(long, conflicts_with = "flexible")]
        rigid: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_UNIT_STEPS)]
        max_steps: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Rewrite a slot-specific instance as a dynamic reserves instance.
    Convert {
        instance: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Generate random instances.
    Gen {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, value_enum, default_value = "dynamic")]
        kind: Kind,
        /// Directory for the files when more than one is generated.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        output: Output,
    },
}

/// Process exit status.
pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

fn emit(output: &Output, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match &output.out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Prints the report in the requested style and, with `--out`, also saves
/// the machine-readable form.
fn show<T: serde::Serialize>(
    output: &Output,
    value: &T,
    table: impl FnOnce(&T) -> String,
    stdout: &mut dyn Write,
) -> Result<()> {
    let machine = to_machine(value);
    let shown = match output.format {
        Format::Table => table(value),
        Format::Machine => machine.clone(),
    };
    stdout.write_all(shown.as_bytes())?;
    if let Some(p) = &output.out {
        std::fs::write(p, machine)?;
    }
    Ok(())
}

fn load_audit_inputs(paths: &[PathBuf]) -> Result<Vec<(String, ProblemInstance)>> {
    paths
        .iter()
        .map(|p| {
            let inst = match load_any(p)? {
                LoadedInstance::Dynamic(i) => i,
                LoadedInstance::SlotSpecific(s) => convert_instance(&s)?,
            };
            Ok((p.display().to_string(), inst))
        })
        .collect()
}

fn same_market(a: &ProblemInstance, b: &ProblemInstance, path: &Path) -> Result<()> {
    if a.market != b.market {
        return Err(Error::invalid(format!(
            "{} does not share the market of the rigid instance",
            path.display()
        )));
    }
    Ok(())
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Match {
            instance,
            order_seed,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let prefs = &inst.market.preferences;
            let out = match order_seed {
                Some(seed) => run_cop(&inst, prefs, &ProposalOrder::shuffled(&inst.market, &mut stream(seed, 0)))?,
                None => cop_outcome(&inst, prefs),
            };
            let r = match_report(&inst, &out);
            show(&output, &r, render_match, stdout)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            instance,
            allocation,
            blocking_cap,
            output,
        } => {
            let inst = load_instance(&instance)?;
            let alloc = load_allocation(&allocation, &inst.market)?;
            let s = is_stable(&alloc, &inst, &inst.market.preferences, blocking_cap)?;
            let r = verify_report(&inst, &alloc, &s);
            show(&output, &r, render_verify, stdout)?;
            Ok(if r.stable { EXIT_OK } else { EXIT_PROPERTY_FAILED })
        }
        Command::Validate { instance, output } => {
            let inst = load_any(&instance)?;
            let kind = match inst {
                LoadedInstance::Dynamic(_) => "dynamic reserves",
                LoadedInstance::SlotSpecific(_) => "slot-specific",
            };
            let value = serde_json::json!({ "valid": true, "kind": kind });
            show(&output, &value, |_| format!("valid {kind} instance\n"), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Audit {
            instances,
            count,
            order_trials,
            gen,
            output,
        } => {
            let inputs = if instances.is_empty() {
                let params = gen.params().map_err(Error::InvalidInput)?;
                generate_batch(&params, count)
                    .into_iter()
                    .enumerate()
                    .map(|(n, i)| (format!("#{n}"), i))
                    .collect()
            } else {
                load_audit_inputs(&instances)?
            };
            let cfg = AuditConfig {
                seed: gen.seed,
                caps: Caps::for_contracts(gen.max_contracts.max(10)),
                order_trials,
                ..AuditConfig::default()
            };
            let report = worker_pool().install(|| run_audit(&inputs, &cfg));
            show(&output, &report, render_audit, stdout)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_PROPERTY_FAILED })
        }
        Command::Compare {
            instance,
            flexible,
            rigid,
            max_steps,
            output,
        } => {
            let first = load_instance(&instance)?;
            let (base, flex) = match (flexible, rigid) {
                (Some(p), false) => {
                    let f = load_instance(&p)?;
                    same_market(&first, &f, &p)?;
                    (first, f)
                }
                (None, true) => (rigid_version(&first), first),
                _ => return Err(Error::invalid("give a second instance or --rigid")),
            };
            let r = check_flexibility_pareto(&base, &flex, &base.market.preferences, max_steps)?;
            let report = compare_report(&base.market, &r);
            show(&output, &report, render_compare, stdout)?;
            let ok = r.weakly_dominates && r.chain_matches != Some(false) && r.worse_steps == 0;
            Ok(if ok { EXIT_OK } else { EXIT_PROPERTY_FAILED })
        }
        Command::Convert { instance, output } => {
            let inst = match load_any(&instance)? {
                LoadedInstance::SlotSpecific(s) => s,
                LoadedInstance::Dynamic(_) => return Err(Error::invalid("expected a slot-specific instance")),
            };
            let converted = convert_instance(&inst)?;
            emit(&output, &instance_to_json(&converted), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Gen {
            count,
            kind,
            dir,
            gen,
            output,
        } => {
            let params = gen.params().map_err(Error::InvalidInput)?;
            let texts: Vec<String> = match kind {
                Kind::Dynamic => generate_batch(&params, count).iter().map(instance_to_json).collect(),
                Kind::SlotSpecific => (0..count)
                    .map(|n| slot_specific_to_json(&generate_slot_specific(&params.clone().with_seed(params.seed.wrapping_add(n as u64)))))
                    .collect(),
            };
            match dir {
                Some(d) => {
                    std::fs::create_dir_all(&d)?;
                    for (n, t) in texts.iter().enumerate() {
                        std::fs::write(d.join(format!("instance-{n:04}.json")), t)?;
                    }
                }
                None if texts.len() == 1 => emit(&output, &texts[0], stdout)?,
                None => return Err(Error::invalid("use --dir to write more than one instance")),
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let Error::Validation(v) = &e {
                for v in v {
                    let _ = writeln!(stderr, "  {v}");
                }
            }
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("reserve-match").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["frobnicate"]).0, EXIT_ERROR);
        assert_eq!(call(&["match", "/nonexistent/file.json"]).0, EXIT_ERROR);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("audit"));
    }

    #[test]
    fn gen_writes_one_instance_to_stdout() {
        let (code, out, err) = call(&["gen", "--seed", "3"]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(crate::harness::io::parse_dynamic(&out).is_ok());
    }
}
