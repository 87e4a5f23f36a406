mod args;
mod commands;
mod error;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, DatasetAction, Settings};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let mut s = Settings::default();
    match cli.command {
        Command::Stats { input, data } => {
            s.apply_data(&data);
            commands::cmd_stats(&input, &s)
        }
        Command::Dataset {
            action: DatasetAction::Dump { input, data, out },
        } => {
            s.apply_data(&data);
            commands::cmd_dump(&input, &s, out.as_deref())
        }
        Command::Distmat {
            input,
            data,
            ncd,
            out,
            csv,
        } => {
            s.apply_data(&data);
            s.apply_ncd(&ncd);
            commands::cmd_distmat(&input, &s, &out, csv.as_deref())
        }
        Command::Embed {
            dist,
            embed,
            out,
            bin,
            kernel_out,
        } => {
            s.apply_embed(&embed);
            commands::cmd_embed(&dist, &s, &out, bin.as_deref(), kernel_out.as_deref())
        }
        Command::Eval {
            embedding,
            dist,
            data,
            data_args,
            embed,
            eval,
            report,
        } => {
            s.apply_data(&data_args);
            s.apply_embed(&embed);
            s.apply_eval(&eval);
            commands::cmd_eval(embedding.as_deref(), dist.as_deref(), data.as_deref(), &s, report.as_deref())
        }
        Command::Pipeline {
            config,
            sets,
            force,
            input,
            out_dir,
            data,
            ncd,
            embed,
            eval,
        } => {
            s.out_dir = config.parent().unwrap_or(std::path::Path::new(".")).join(&s.out_dir);
            pipeline::apply_config_file(&config, &mut s)?;
            pipeline::apply_sets(&sets, &mut s)?;
            if let Some(p) = input {
                s.input = Some(p);
            }
            if let Some(p) = out_dir {
                s.out_dir = p;
            }
            s.apply_data(&data);
            s.apply_ncd(&ncd);
            s.apply_embed(&embed);
            s.apply_eval(&eval);
            pipeline::run(&s, force)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
