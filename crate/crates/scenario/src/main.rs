use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use milp::SolverConfig;
use supply::planner;
use supply::{
    apply_disruption, load_scenario, save_network, total_cost, DisruptionEvent, PlanFile,
};

use scenario::report::{export_csv, export_text, method_flow_diff};
use scenario::runner::{
    builtin_event, run_scenario, MethodChoice, NetworkSource, RunReport, ScenarioConfig,
    DISTRIBUTED,
};
use scenario::REFERENCE_SEED;

/// Disruption-response workbench: plan a supply network, knock pieces out,
/// and compare the centralized re-planner against the agent protocol.
#[derive(Parser)]
#[command(name = "scenario", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the baseline plan and summarize it.
    Plan(PlanArgs),
    /// Apply a disruption and write the disrupted network.
    Disrupt(DisruptArgs),
    /// Run the configured response methods and write every report artifact.
    Compare(CompareArgs),
    /// Run a scenario and print a single artifact to stdout.
    Export(ExportArgs),
}

#[derive(Args)]
struct NetworkArgs {
    /// Network file in the JSON schema; omitted = the built-in case study.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Demand seed for the built-in network.
    #[arg(long, default_value_t = REFERENCE_SEED)]
    seed: u64,
}

impl NetworkArgs {
    fn source(&self) -> NetworkSource {
        match &self.network {
            Some(path) => NetworkSource::File(path.clone()),
            None => NetworkSource::Builtin { seed: self.seed },
        }
    }
}

#[derive(Args)]
struct ScenarioArg {
    /// Built-in scenario name (c5, t4, o1) or a disruption JSON file.
    #[arg(long)]
    scenario: String,
}

impl ScenarioArg {
    fn resolve(&self) -> Result<(String, DisruptionEvent)> {
        if let Some(event) = builtin_event(&self.scenario) {
            return Ok((self.scenario.clone(), event));
        }
        let path = Path::new(&self.scenario);
        if !path.exists() {
            bail!(
                "unknown scenario '{}': not a built-in name (c5, t4, o1) and no such file",
                self.scenario
            );
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.scenario.clone());
        let event = load_scenario(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        Ok((label, event))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Centralized,
    Distributed,
    Both,
}

impl From<MethodArg> for MethodChoice {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Centralized => MethodChoice::Centralized,
            MethodArg::Distributed => MethodChoice::Distributed,
            MethodArg::Both => MethodChoice::Both,
        }
    }
}

#[derive(Args)]
struct ResponseArgs {
    /// Which response method(s) to run.
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,
    /// Multiplier on every lane status-change penalty.
    #[arg(long, default_value_t = 1.0)]
    rho_e_scale: f64,
    /// Cap on how many new lanes the re-planner may open.
    #[arg(long)]
    ea_cap: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Write the solved plan to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DisruptArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Where to write the disrupted network.
    #[arg(long, default_value = "disrupted.json")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    response: ResponseArgs,
    /// Directory for metrics.csv, metrics.txt, flow diffs and transcripts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
    Dot,
    Transcript,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    response: ResponseArgs,
    /// Which artifact to print.
    #[arg(long, value_enum)]
    format: Format,
    /// Method for the dot artifact (transcripts are always distributed).
    #[arg(long, value_enum, default_value_t = MethodArg::Distributed)]
    diff_method: MethodArg,
}

fn build_config(
    label: String,
    event: DisruptionEvent,
    network: &NetworkArgs,
    response: &ResponseArgs,
) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(label, event);
    cfg.network = network.source();
    cfg.method = response.method.into();
    cfg.edge_penalty_scale = response.rho_e_scale;
    cfg.added_edge_cap = response.ea_cap;
    cfg
}

fn load_net(args: &NetworkArgs) -> Result<supply::SupplyNetwork> {
    match args.source() {
        NetworkSource::Builtin { seed } => Ok(scenario::build_case_study_network(seed)),
        NetworkSource::File(path) => supply::load_network(&path)
            .with_context(|| format!("cannot read network {}", path.display())),
    }
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let net = load_net(&args.network)?;
    let plan = planner::plan(&net, &SolverConfig::default())?;
    let cost = total_cost(&net, &plan, None)?;
    let demand: f64 = net
        .vertices
        .values()
        .flat_map(|v| v.demand.values())
        .map(|d| d.quantity)
        .sum();
    let served: f64 = plan.satisfied.values().sum();
    println!("total cost     {:.2}", cost.total);
    println!("demand served  {served:.1} of {demand:.1}");
    println!("lanes in use   {}", plan.edge_used.len());
    println!("lines open     {}", plan.line_open.len());
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&PlanFile::from_plan(&plan))?;
        fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
        println!("plan written to {}", out.display());
    }
    Ok(())
}

fn cmd_disrupt(args: &DisruptArgs) -> Result<()> {
    let (label, event) = args.scenario.resolve()?;
    let net = load_net(&args.network)?;
    let disrupted = apply_disruption(&net, &event)?;
    let vertices_out = disrupted.vertices.values().filter(|v| v.disabled).count();
    let lanes_out = disrupted.edges.values().filter(|e| e.disabled).count();
    save_network(&disrupted, &args.out)?;
    println!(
        "{label}: {vertices_out} vertices and {lanes_out} lanes out of service; \
         network written to {}",
        args.out.display()
    );
    Ok(())
}

fn run(args_net: &NetworkArgs, scn: &ScenarioArg, response: &ResponseArgs) -> Result<RunReport> {
    let (label, event) = scn.resolve()?;
    let cfg = build_config(label, event, args_net, response);
    Ok(run_scenario(&cfg)?)
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let report = run(&args.network, &args.scenario, &args.response)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let reports = std::slice::from_ref(&report);
    fs::write(args.out.join("metrics.csv"), export_csv(reports)?)?;
    fs::write(args.out.join("metrics.txt"), export_text(reports))?;
    for method in report.rows.keys() {
        fs::write(
            args.out.join(format!("flows_{method}.dot")),
            method_flow_diff(&report, method)?,
        )?;
    }
    for (method, log) in &report.logs {
        fs::write(
            args.out.join(format!("transcript_{method}.log")),
            log.export(),
        )?;
    }
    print!("{}", export_text(reports));
    for (method, total) in &report.totals {
        println!(
            "{method}: total cost {:.2}, unserved {:.1}",
            total, report.shortfalls[method]
        );
    }
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let report = run(&args.network, &args.scenario, &args.response)?;
    let reports = std::slice::from_ref(&report);
    match args.format {
        Format::Csv => print!("{}", export_csv(reports)?),
        Format::Text => print!("{}", export_text(reports)),
        Format::Dot => {
            let method = match args.diff_method {
                MethodArg::Centralized => "centralized",
                _ => DISTRIBUTED,
            };
            print!("{}", method_flow_diff(&report, method)?);
        }
        Format::Transcript => {
            let log = report
                .logs
                .get(DISTRIBUTED)
                .context("no transcript: the distributed method did not run")?;
            print!("{}", log.export());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Disrupt(args) => cmd_disrupt(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Export(args) => cmd_export(args),
    }
}
