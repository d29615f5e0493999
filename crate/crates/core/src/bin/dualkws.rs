use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualkws::cli::{exit_code, Project, ProjectConfig};
use dualkws::eval::ScenarioKind;
use dualkws::pipeline::Modality;
use dualkws::{Error, Result};

#[derive(Parser)]
#[command(name = "dualkws", version, about = "Vocal-echoic keyword spotting pipeline")]
struct Args {
    /// Project configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Project root for all artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Vocal,
    Echoic,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Rb,
    Mlp,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default configuration for a seed.
    InitConfig,
    /// Render the synthetic dataset and its manifest.
    Generate,
    /// Extract feature banks for both modalities.
    Featurize,
    /// Train a modality classifier.
    Train {
        #[arg(value_enum, default_value = "all")]
        modality: Which,
    },
    /// Fit the fusion strategies on the tune split.
    FitFusion {
        #[arg(value_enum, default_value = "all")]
        strategy: Strategy,
    },
    /// Run evaluation scenarios; all of them when none is given.
    Evaluate { scenarios: Vec<String> },
}

fn project(args: &Args) -> Result<Project> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ProjectConfig::load(path)?;
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }
    if args.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    Ok(Project::new(config, &args.out, args.jobs))
}

fn run(args: Args) -> Result<()> {
    if let Command::InitConfig = args.command {
        print!("{}", ProjectConfig::reference(args.seed.unwrap_or(0)).to_json()?);
        return Ok(());
    }
    let p = project(&args)?;
    match args.command {
        Command::InitConfig => unreachable!(),
        Command::Generate => print!("{}", p.generate()?),
        Command::Featurize => p.featurize()?,
        Command::Train { modality } => {
            let ms: &[Modality] = match modality {
                Which::Vocal => &[Modality::Vocal],
                Which::Echoic => &[Modality::Echoic],
                Which::All => &[Modality::Vocal, Modality::Echoic],
            };
            for &m in ms {
                let [tr, tu, te] = p.train(m)?;
                println!("{}: train {tr:.4} tune {tu:.4} test {te:.4}", m.name());
            }
        }
        Command::FitFusion { strategy } => p.fit_fusion(
            matches!(strategy, Strategy::Rb | Strategy::All),
            matches!(strategy, Strategy::Mlp | Strategy::All),
        )?,
        Command::Evaluate { scenarios } => {
            let kinds = if scenarios.is_empty() {
                ScenarioKind::ALL.to_vec()
            } else {
                scenarios.iter().map(|s| ScenarioKind::parse(s)).collect::<Result<_>>()?
            };
            for r in p.evaluate(&kinds)? {
                print!("{}", r.to_csv());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
