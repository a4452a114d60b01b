//! `emr` operator commands: bootstrap, seeding, serving and audit/snapshot
//! utilities. Output is plain text, one result per line.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use emr_api::ApiConfig;
use emr_core::archetype::{parse_archetype, RegisterOutcome};
use emr_core::clock::SystemClock;
use emr_core::store::{verify_audit_file, AuditStatus, Store};
use emr_core::Clinic;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Actor recorded in the audit log for operator commands.
pub const CLI_ACTOR: &str = "cli";

#[derive(Debug, Parser)]
#[command(name = "emr", version, about = "Clinic EMR operator tool")]
pub struct Cli {
    /// Directory holding the record store.
    #[arg(long, global = true, env = "EMR_DATA_DIR", default_value = emr_api::DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,

    /// Port for `serve`.
    #[arg(long, global = true, env = "EMR_PORT", default_value_t = emr_api::DEFAULT_PORT)]
    pub port: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service until interrupted.
    Serve,
    /// Create the first administrator and print its one-time password.
    InitAdmin {
        #[arg(long)]
        username: String,
    },
    /// Load the built-in reference data; existing items are left alone.
    SeedReferences,
    /// Register every `*.arch` file in a directory.
    ImportArchetypes {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write a snapshot of every record version and audit event.
    ExportSnapshot {
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a snapshot into an empty data directory.
    ImportSnapshot {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Check the audit hash chain.
    VerifyAudit,
}

struct Failure(String);

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DOMAIN
        }
    }
}

fn api_config(cli: &Cli) -> Result<ApiConfig, Failure> {
    Ok(ApiConfig {
        port: cli.port,
        data_dir: cli.data_dir.clone(),
        ..ApiConfig::from_env()?
    })
}

fn open_clinic(cli: &Cli) -> Result<Clinic, Failure> {
    let config = api_config(cli)?;
    fs::create_dir_all(&config.data_dir)?;
    Ok(Clinic::open(config.clinic_config())?)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Serve => {
            let config = api_config(&cli)?;
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(emr_api::serve(config))?;
        }
        Command::InitAdmin { username } => {
            let clinic = open_clinic(&cli)?;
            let (user, password) = clinic.init_admin(username)?;
            writeln!(out, "user_id={}", user.user_id)?;
            writeln!(out, "username={}", user.username)?;
            writeln!(out, "one_time_password={password}")?;
        }
        Command::SeedReferences => {
            let report = open_clinic(&cli)?.seed_references()?;
            writeln!(out, "added={} unchanged={}", report.added, report.unchanged)?;
        }
        Command::ImportArchetypes { dir } => {
            let sources = read_archetype_dir(dir)?;
            let mut bad = 0;
            for (path, source) in &sources {
                if let Err(e) = parse_archetype(source) {
                    bad += 1;
                    writeln!(out, "invalid {} {e}", path.display())?;
                }
            }
            if bad > 0 {
                return Err(Failure(format!("{bad} archetype file(s) failed to parse; nothing imported")));
            }
            let clinic = open_clinic(&cli)?;
            let (mut added, mut unchanged) = (0, 0);
            for (path, source) in &sources {
                let (def, outcome) = clinic
                    .import_archetype_source(source, CLI_ACTOR)
                    .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                let label = match outcome {
                    RegisterOutcome::Added => {
                        added += 1;
                        "added"
                    }
                    RegisterOutcome::Unchanged => {
                        unchanged += 1;
                        "unchanged"
                    }
                };
                writeln!(out, "{label} {} {}", def.archetype_id, path.display())?;
            }
            writeln!(out, "added={added} unchanged={unchanged}")?;
        }
        Command::ExportSnapshot { out: path } => {
            let store = Store::open(&cli.data_dir, Arc::new(SystemClock))?;
            let mut bytes = Vec::new();
            let counts = store.export_snapshot(&mut bytes)?;
            fs::write(path, bytes).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            writeln!(out, "records={} audit_events={}", counts.records, counts.audit_events)?;
        }
        Command::ImportSnapshot { input } => {
            let bytes = fs::read(input).map_err(|e| Failure(format!("{}: {e}", input.display())))?;
            fs::create_dir_all(&cli.data_dir)?;
            let store = Store::open(&cli.data_dir, Arc::new(SystemClock))?;
            let counts = store.import_snapshot(&bytes)?;
            writeln!(out, "records={} audit_events={}", counts.records, counts.audit_events)?;
        }
        Command::VerifyAudit => match verify_audit_file(&cli.data_dir)? {
            AuditStatus::Ok => writeln!(out, "Ok")?,
            AuditStatus::Corrupt { first_bad_seq } => {
                writeln!(out, "Corrupt first_bad_seq={first_bad_seq}")?;
                return Ok(EXIT_DOMAIN);
            }
        },
    }
    Ok(EXIT_OK)
}

/// `*.arch` files in `dir`, sorted by file name.
fn read_archetype_dir(dir: &Path) -> Result<Vec<(PathBuf, String)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "arch") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
            Ok((p, text))
        })
        .collect()
}
