//! `joinbound` command-line front end. Reports are `key value` lines on stdout.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use joinbound::bounds::{
    constrained_bound, constrained_worst_instance, graph_to_query, independent_set_instance, parse_graph,
    worst_case_instance, BoundValue,
};
use joinbound::deproject::{deproject, inflation_report};
use joinbound::engine::parse_database;
use joinbound::lp::{greedy_edge_cover, rho_star};
use joinbound::plan::parse_plan_named;
use joinbound::plans::{adversarial_instance, cover_join_plan, gm_plan};
use joinbound::query::parse_query_named;
use joinbound::rational::{fmt_float, fmt_rational};
use joinbound::stochastic::{
    concentration_experiment, expected_answer_size, max_density_bruteforce, max_density_flow, parse_model,
    sample_instance, DensityReport, PowerOfTwo, ProbabilityModel,
};
use joinbound::{evaluate, oracle_answer, solve_cover_lp, AttrSet, CoverLp, Error, Instance, JoinQuery, Plan};

#[derive(Parser)]
#[command(name = "joinbound", version, about = "Size bounds and plans for natural join queries")]
struct Cli {
    /// Print human-readable notes on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fractional edge cover number with an optimal cover.
    RhoStar { query: PathBuf },
    /// Size-constrained cover bound.
    Bound {
        query: PathBuf,
        #[arg(long)]
        sizes: PathBuf,
    },
    /// Grid instance `Π [N0^{p_a}]` for the optimal packing `y_a = p_a / q`.
    WorstCase {
        query: PathBuf,
        #[arg(long)]
        n0: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Instance with prescribed relation sizes and a near-maximal answer.
    ConstrainedWorst {
        query: PathBuf,
        #[arg(long)]
        sizes: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Builds a plan.
    #[command(subcommand)]
    Plan(PlanKind),
    /// Evaluates a plan on a database.
    Eval {
        query: PathBuf,
        plan: PathBuf,
        db: PathBuf,
        /// Report every subplan's cardinality.
        #[arg(long)]
        trace: bool,
    },
    /// Maximum density of a probability model.
    Density {
        query: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Flow)]
        method: Method,
    },
    /// Draws a random database.
    Sample {
        query: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Answer-size statistics over repeated samples.
    Concentrate {
        query: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-trial answer sizes as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rewrites a join-project plan into a join plan for the model's N.
    Deproject {
        query: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Estimate the largest expected subplan size of both plans.
        #[arg(long)]
        report_inflation: bool,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the rewritten plan.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Query and instance separating join plans from join-project plans.
    Adversarial {
        #[arg(long)]
        m: usize,
        #[arg(long = "N")]
        big_n: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Query and witness instance for a graph's independent sets.
    Indset {
        #[arg(long)]
        graph: PathBuf,
        /// Independent set to realize; defaults to a maximum one.
        #[arg(long, value_delimiter = ',')]
        witness: Option<Vec<String>>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum PlanKind {
    /// Attribute-prefix join-project plan.
    Gm {
        query: PathBuf,
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Join plan that starts from a greedy edge cover.
    Cover {
        query: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Brute,
    Flow,
    Both,
}

enum Failure {
    Lib(Error),
    Io(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(..) => 1,
            Failure::Lib(Error::Parse { .. }) => 2,
            Failure::Lib(Error::Domain(_) | Error::Capacity { .. } | Error::Capability(_)) => 3,
            Failure::Lib(Error::Internal(_)) => 4,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn load_query(path: &Path) -> Result<JoinQuery, Failure> {
    Ok(parse_query_named(&name(path), &read(path)?)?)
}

fn load_model(path: &Path, query: &JoinQuery) -> Result<ProbabilityModel, Failure> {
    Ok(parse_model(&name(path), &read(path)?, query)?)
}

/// Parses a plan and checks it against the schema; a mismatch is reported
/// as a parse error in the plan file.
fn load_plan(path: &Path, query: &JoinQuery) -> Result<Plan, Failure> {
    let plan = parse_plan_named(&name(path), &read(path)?)?;
    plan.validate(query).map_err(|e| Error::Parse {
        source_name: name(path),
        line: 1,
        message: match e {
            Error::Domain(m) => m,
            other => other.to_string(),
        },
    })?;
    Ok(plan)
}

/// Reads `size <rel> <int>` lines; every relation needs exactly one.
fn load_sizes(path: &Path, query: &JoinQuery) -> Result<Vec<u64>, Failure> {
    let source_name = name(path);
    let text = read(path)?;
    let mut sizes = vec![None; query.m()];
    for (lineno, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            source_name: source_name.clone(),
            line: lineno + 1,
            message,
        };
        let line = line.split('#').next().unwrap_or("");
        match line.split_whitespace().collect::<Vec<_>>().as_slice() {
            [] => {}
            ["size", rel, value] => {
                let i = query
                    .relation_index(rel)
                    .ok_or_else(|| err(format!("unknown relation `{rel}`")))?;
                let v: u64 = value.parse().map_err(|_| err(format!("invalid size `{value}`")))?;
                if sizes[i].replace(v).is_some() {
                    return Err(err(format!("duplicate size for `{rel}`")).into());
                }
            }
            _ => return Err(err("expected `size <rel> <int>`".into()).into()),
        }
    }
    sizes
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| {
                Failure::Lib(Error::Parse {
                    source_name: source_name.clone(),
                    line: text.lines().count().max(1),
                    message: format!("missing size for `{}`", query.relation(i).name),
                })
            })
        })
        .collect()
}

fn kv(key: impl Display, value: impl Display) {
    println!("{key} {value}");
}

fn attr_list(query: &JoinQuery, set: AttrSet) -> String {
    let names = query.attr_names(set);
    if names.is_empty() {
        "-".into()
    } else {
        names.join(",")
    }
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "-".into()
    } else {
        items.join(",")
    }
}

fn print_cover(query: &JoinQuery, x: &[joinbound::Rational], y: &[joinbound::Rational]) {
    for (r, v) in query.relations().iter().zip(x) {
        kv(format!("x.{}", r.name), fmt_rational(v));
    }
    for (a, v) in query.attributes().iter().zip(y) {
        kv(format!("y.{a}"), fmt_rational(v));
    }
}

fn print_bound(prefix: &str, bound: &BoundValue) {
    match &bound.log2_exact {
        Some(e) => kv(format!("{prefix}log2_bound"), fmt_rational(e)),
        None => kv(format!("{prefix}log2_bound"), fmt_float(bound.log2)),
    }
    kv(format!("{prefix}bound"), fmt_float(bound.value));
}

fn print_power(key: &str, p: &PowerOfTwo) {
    match &p.log2_exact {
        Some(e) => kv(format!("log2_{key}"), fmt_rational(e)),
        None => kv(format!("log2_{key}"), fmt_float(p.log2)),
    }
    kv(key, fmt_float(p.value));
}

fn write_db(path: &Path, query: &JoinQuery, db: &Instance) -> CliResult {
    write(path, &db.to_text(query))?;
    for r in query.relations() {
        kv(format!("size.{}", r.name), db.get(&r.name).map_or(0, |rel| rel.len()));
    }
    kv("database_size", db.size());
    Ok(())
}

fn note(verbose: bool, text: impl Display) {
    if verbose {
        eprintln!("{text}");
    }
}

fn emit_plan(plan: &Plan, output: Option<&Path>) -> CliResult {
    kv("plan", plan);
    kv("projections", plan.projection_count());
    kv("subplans", plan.subplans().len());
    if let Some(path) = output {
        write(path, &format!("{plan}\n"))?;
    }
    Ok(())
}

fn report_density(query: &JoinQuery, label: &str, r: &DensityReport) {
    kv(format!("{label}max_density"), fmt_rational(&r.max_density));
    kv(format!("{label}densest"), attr_list(query, r.best));
}

fn run(cli: Cli) -> CliResult {
    let verbose = cli.verbose;
    match cli.command {
        Command::RhoStar { query } => {
            let q = load_query(&query)?;
            let sol = solve_cover_lp(&CoverLp::unit(&q))?;
            kv("rho_star", fmt_rational(&rho_star(&q)?));
            print_cover(&q, &sol.x, &sol.y);
            kv("greedy_cover", greedy_edge_cover(&q)?.names(&q).join(","));
        }
        Command::Bound { query, sizes } => {
            let q = load_query(&query)?;
            let sizes = load_sizes(&sizes, &q)?;
            let b = constrained_bound(&q, &sizes)?;
            print_bound("", &b.bound);
            kv("exact_costs", b.exact_costs);
            kv("cost_perturbation", fmt_float(b.cost_perturbation));
            print_cover(&q, &b.solution.x, &b.solution.y);
            if !b.exact_costs {
                note(verbose, "some sizes are not powers of two; costs use the exact value of log2 as a float");
            }
        }
        Command::WorstCase { query, n0, output } => {
            let q = load_query(&query)?;
            let wc = worst_case_instance(&q, n0)?;
            kv("rho_star", fmt_rational(&wc.cover.objective));
            kv("denominator", wc.denominator);
            for (a, g) in q.attributes().iter().zip(&wc.grid) {
                kv(format!("grid.{a}"), g);
            }
            write_db(&output, &q, &wc.instance)?;
            kv("answer_size", oracle_answer(&q, &wc.instance)?.len());
        }
        Command::ConstrainedWorst { query, sizes, output } => {
            let q = load_query(&query)?;
            let sizes = load_sizes(&sizes, &q)?;
            let ci = constrained_worst_instance(&q, &sizes)?;
            print_bound("", &ci.bound.bound);
            kv("guaranteed_answer", fmt_float(ci.guaranteed_answer(q.n())));
            for (a, g) in q.attributes().iter().zip(&ci.grid) {
                kv(format!("grid.{a}"), g);
            }
            write_db(&output, &q, &ci.instance)?;
            kv("answer_size", oracle_answer(&q, &ci.instance)?.len());
        }
        Command::Plan(PlanKind::Gm { query, order, output }) => {
            let q = load_query(&query)?;
            let order = order.unwrap_or_else(|| q.attributes().to_vec());
            emit_plan(&gm_plan(&q, &order)?, output.as_deref())?;
        }
        Command::Plan(PlanKind::Cover { query, output }) => {
            let q = load_query(&query)?;
            emit_plan(&cover_join_plan(&q)?, output.as_deref())?;
        }
        Command::Eval { query, plan, db, trace } => {
            let q = load_query(&query)?;
            let plan = load_plan(&plan, &q)?;
            let db = parse_database(&name(&db), &read(&db)?, &q)?;
            let (answer, t) = evaluate(&plan, &db)?;
            kv("database_size", db.size());
            kv("answer_size", answer.len());
            kv("peak_cardinality", t.peak_cardinality());
            if trace {
                let nodes = plan.subplans();
                for e in &t.entries {
                    kv(format!("subplan.{}", e.node), format!("{} {}", e.cardinality, nodes[e.node]));
                }
            }
        }
        Command::Density { query, model, method } => {
            let q = load_query(&query)?;
            let m = load_model(&model, &q)?;
            match method {
                Method::Brute => report_density(&q, "", &max_density_bruteforce(&q, &m.weights)?),
                Method::Flow => report_density(&q, "", &max_density_flow(&q, &m.weights)?),
                Method::Both => {
                    let brute = max_density_bruteforce(&q, &m.weights)?;
                    let flow = max_density_flow(&q, &m.weights)?;
                    report_density(&q, "brute.", &brute);
                    report_density(&q, "flow.", &flow);
                    if brute.max_density != flow.max_density {
                        return Err(Error::Internal("brute-force and flow densities differ".into()).into());
                    }
                    kv("agree", true);
                }
            }
            kv("log2_n", fmt_float(m.log2_n_f64()));
        }
        Command::Sample {
            query,
            model,
            seed,
            output,
        } => {
            let q = load_query(&query)?;
            let m = load_model(&model, &q)?;
            kv("seed", seed);
            write_db(&output, &q, &sample_instance(&q, &m, seed)?)?;
        }
        Command::Concentrate {
            query,
            model,
            trials,
            seed,
            csv,
        } => {
            let q = load_query(&query)?;
            let m = load_model(&model, &q)?;
            let r = concentration_experiment(&q, &m, trials, seed)?;
            kv("N", m.big_n);
            kv("trials", r.trials);
            kv("seed", r.seed);
            kv("mean", fmt_float(r.mean));
            kv("variance", fmt_float(r.variance));
            print_power("expected", &r.expected);
            match &r.variance_bound {
                Some(b) => print_power("variance_bound", b),
                None => kv("variance_bound", "none"),
            }
            kv("empty_fraction", fmt_float(r.empty_fraction));
            kv("max_density", fmt_rational(&r.max_density));
            kv("log2_n", fmt_float(r.log2_n));
            kv("gap", fmt_float(r.gap));
            kv("regime", r.regime.label());
            if let Some(path) = csv {
                let mut text = String::from("trial,seed,answer_size\n");
                for (t, s) in r.sizes.iter().enumerate() {
                    text.push_str(&format!("{t},{},{s}\n", seed.wrapping_add(t as u64)));
                }
                write(&path, &text)?;
            }
        }
        Command::Deproject {
            query,
            plan,
            model,
            report_inflation,
            trials,
            seed,
            output,
        } => {
            let q = load_query(&query)?;
            let original = load_plan(&plan, &q)?;
            let m = load_model(&model, &q)?;
            let d = deproject(&original, &q, &m)?;
            kv("N", m.big_n);
            kv("projections", d.initial_projections);
            kv("iterations", d.iterations());
            for (i, s) in d.steps.iter().enumerate() {
                kv(format!("step.{i}.target"), list(&s.target));
                kv(format!("step.{i}.closure"), list(&s.a_star));
                kv(format!("step.{i}.removed"), list(&s.removed));
            }
            kv("plan", &d.plan);
            print_power("expected_answer", &expected_answer_size(&q, &m));
            if let Some(path) = output {
                write(&path, &format!("{}\n", d.plan))?;
            }
            if report_inflation {
                let r = inflation_report(&original, &d.plan, &q, &m, trials, seed)?;
                kv("trials", r.trials);
                kv("seed", seed);
                kv("max_mean_original", fmt_float(r.max_mean_original));
                kv("max_mean_rewritten", fmt_float(r.max_mean_rewritten));
                kv("argmax_original", r.argmax_original);
                kv("argmax_rewritten", r.argmax_rewritten);
                kv("inflation", fmt_float(r.ratio));
                kv("inflation_ci_low", fmt_float(r.ci_low));
                kv("inflation_ci_high", fmt_float(r.ci_high));
            }
            note(verbose, format!("the rewritten plan is tailored to N = {}", m.big_n));
        }
        Command::Adversarial { m, big_n, output } => {
            let (q, db) = adversarial_instance(m, big_n)?;
            fs::create_dir_all(&output).map_err(|e| Failure::Io(output.clone(), e))?;
            write(&output.join("query.jq"), &q.to_text())?;
            write(&output.join("db.jdb"), &db.to_text(&q))?;
            kv("m", m);
            kv("N", big_n);
            kv("query_size", q.size());
            kv("database_size", db.size());
            kv("answer_size", oracle_answer(&q, &db)?.len());
        }
        Command::Indset { graph, witness, output } => {
            let g = parse_graph(&name(&graph), &read(&graph)?)?;
            let (q, _) = graph_to_query(&g)?;
            let set = match witness {
                Some(names) => {
                    let set = g.vertex_set(&names)?;
                    if !g.is_independent(set) {
                        return Err(Error::Domain("witness is not an independent set".into()).into());
                    }
                    set
                }
                None => g.maximum_independent_set(),
            };
            let db = independent_set_instance(&g, set)?;
            fs::create_dir_all(&output).map_err(|e| Failure::Io(output.clone(), e))?;
            write(&output.join("query.jq"), &q.to_text())?;
            write(&output.join("db.jdb"), &db.to_text(&q))?;
            let sizes: String = q.relations().iter().map(|r| format!("size {} 2\n", r.name)).collect();
            write(&output.join("sizes.txt"), &sizes)?;
            kv("vertices", g.n());
            kv("edges", q.m());
            kv("independence_number", g.independence_number());
            kv("witness", list(&set.iter().map(|v| g.vertices[v].clone()).collect::<Vec<_>>()));
            kv("witness_size", set.len());
            kv("database_size", db.size());
            kv("answer_size", oracle_answer(&q, &db)?.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
