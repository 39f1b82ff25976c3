use std::sync::Arc;

use clap::Parser;
use modalbank::dataset::Dataset;
use modalbank::predictor::load_checkpoint;
use modalbank::Result;
use modalbank_cli::cli::{Cli, Command, ServeArgs};
use modalbank_cli::config::Config;
use modalbank_cli::{commands, error_json, exit_code, server};
use serde_json::Value;

fn serve(cfg: &Config, a: &ServeArgs) -> Result<Value> {
    let dataset = a.dataset.as_ref().map(Dataset::open).transpose()?;
    let predictor = a.checkpoint.as_ref().map(load_checkpoint).transpose()?;
    let mut opts = cfg.serve.clone();
    if let Some(addr) = &a.addr {
        opts.addr = addr.clone();
    }
    let addr = opts.addr.clone();
    let state = server::AppState::new(dataset, predictor, cfg.spectral, cfg.ranges, opts, cfg.seed);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, server::router(Arc::clone(&state))).await
    })?;
    Ok(Value::Null)
}

fn run(cli: &Cli) -> Result<Value> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::GenShapes(a) => commands::gen_shapes(&cfg, a),
        Command::GenDataset(a) => commands::gen_dataset(&cfg, a),
        Command::Fit(a) => commands::fit_cmd(&cfg, a),
        Command::Train(a) => commands::train_cmd(&cfg, a),
        Command::Render(a) => commands::render_cmd(&cfg, a),
        Command::Eval(a) => commands::eval_cmd(&cfg, a),
        Command::Bench(a) => commands::bench_cmd(&cfg, a),
        Command::Serve(a) => serve(&cfg, a),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(v) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            } else if !v.is_null() {
                println!("{}", commands::summarize(&v));
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            std::process::exit(exit_code(&e));
        }
    }
}
