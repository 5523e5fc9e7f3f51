use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use subdiff::checks::{self, MsdStatistic};
use subdiff::conjugate::{self, ModelGrid, PriorSpec};
use subdiff::gausslik::{self, LocationScale};
use subdiff::hierarchical::{self, BaseDensity, GibbsConfig, HierConfig, Scatter, TestPrior};
use subdiff::output::fmt_f64;
use subdiff::selection::{self, ModelSpec, PreparedModel};
use subdiff::trajectory::{self, Trajectory};
use subdiff::{ModelFamily, Vartheta};

use crate::args::*;
use crate::ctx::{self, progress, Ctx, TEST_PRIOR_KIND};
use crate::error::{usage, CliResult};

const DEFAULT_DT: f64 = 1.0 / 60.0;

fn unique_ids(trajs: &[Trajectory]) -> CliResult<()> {
    let mut seen = HashSet::new();
    for t in trajs {
        if !seen.insert(t.id()) {
            return usage(format!("two inputs share the name '{}'; output files would collide", t.id()));
        }
    }
    Ok(())
}

fn csv_line(fields: impl IntoIterator<Item = String>) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

fn prepared(family: ModelFamily, prior: PriorSpec, grid_n: Option<usize>) -> CliResult<PreparedModel> {
    let grid = ctx::grid_for(family, &prior, grid_n)?;
    Ok(ModelSpec::new(family, prior, grid).prepare()?)
}

pub fn msd(ctx: &Ctx, a: &MsdArgs) -> CliResult<()> {
    let trajs = ctx::load_trajectories(&a.input)?;
    unique_ids(&trajs)?;
    let mut long = String::from("id,lag_s,msd_um2,n_terms\n");
    for t in &trajs {
        let max_lag = a.max_lag.unwrap_or_else(|| trajectory::default_max_lag(t.n_steps()));
        let c = trajectory::pathwise_msd(t, max_lag, a.detrend.unwrap_or(false))?;
        let mut buf = Vec::new();
        c.write_csv(&mut buf)?;
        ctx.write_csv(&format!("{}.msd.csv", t.id()), &String::from_utf8_lossy(&buf))?;
        for ((l, v), n) in c.lags.iter().zip(&c.values).zip(&c.n_terms) {
            long.push_str(&csv_line([t.id().to_string(), fmt_f64(*l), fmt_f64(*v), n.to_string()]));
        }
    }
    ctx.write_csv("msd_long.csv", &long)
}

pub fn fit(ctx: &Ctx, a: &FitArgs) -> CliResult<()> {
    let family = ctx::family(&a.model)?;
    let prior = ctx::resolve_prior(a.prior.as_deref(), family)?;
    let grid = ModelGrid::new(family, ctx::grid_for(family, &prior, a.model.grid_n)?)?;
    let trajs = ctx::load_trajectories(&a.input)?;
    unique_ids(&trajs)?;
    for (i, t) in trajs.iter().enumerate() {
        progress(format!("fit {} ({}/{})", t.id(), i + 1, trajs.len()));
        let post = conjugate::grid_posterior(&t.increments(), &grid, &prior)?;
        let mut s = String::from("quantity,mean,lower,upper\n");
        for c in post.summary() {
            s.push_str(&csv_line([c.name, fmt_f64(c.mean), fmt_f64(c.lower), fmt_f64(c.upper)]));
        }
        if prior.is_proper() {
            s.push_str(&csv_line(["log_marginal".into(), fmt_f64(conjugate::log_marginal(&post)?), String::new(), String::new()]));
        }
        ctx.write_csv(&format!("{}.summary.csv", t.id()), &s)?;
        ctx.write_json(&format!("{}.posterior.json", t.id()), "posterior-grid", &post)?;
    }
    Ok(())
}

fn pair(s: Option<&str>, default: [f64; 2], what: &str) -> CliResult<[f64; 2]> {
    match s {
        None => Ok(default),
        Some(s) => match ctx::parse_floats(s, what)?.as_slice() {
            [a, b] => Ok([*a, *b]),
            _ => usage(format!("{what} needs two comma-separated values")),
        },
    }
}

pub fn simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult<()> {
    let family = ctx::family(&a.model)?;
    let seed = ctx.seed()?;
    let (dt, n) = (a.dt.unwrap_or(DEFAULT_DT), a.n_steps.unwrap_or(1800));
    let prior = a.prior.as_ref().map(|p| ctx::read_test_prior(p)).transpose()?;
    if let Some(tp) = &prior {
        if tp.family != family {
            return usage(format!("test prior is for {}, not {family}", tp.family));
        }
    }
    let fixed = || -> CliResult<subdiff::Theta> {
        let vartheta = match (family, a.hurst, a.alpha, a.log_tau) {
            (ModelFamily::Fbm, Some(hurst), _, _) => Vartheta::Fbm { hurst },
            (ModelFamily::Gle { .. }, _, Some(alpha), Some(log_tau)) => Vartheta::Gle { alpha, log_tau },
            (ModelFamily::Fbm, ..) => return usage("fBM simulation needs --hurst (or --prior)"),
            _ => return usage("GLE simulation needs --alpha and --log-tau (or --prior)"),
        };
        let mu = pair(a.mu.as_deref(), [0.0, 0.0], "--mu")?;
        let [s1, s2] = pair(a.sigma.as_deref(), [1.0, 1.0], "--sigma")?;
        Ok(subdiff::Theta { vartheta, ls: LocationScale::from_sds(mu, s1, s2, a.rho.unwrap_or(0.0))? })
    };
    let mut params = BTreeMap::new();
    for i in 0..a.count.unwrap_or(1) {
        let s = seed.child(i as u64);
        let theta = match &prior {
            Some(tp) => tp.sample(&tp.adapted_grid(a.model.grid_n.unwrap_or(100))?, &mut s.named("prior").rng())?,
            None => fixed()?,
        };
        let acf = family.acf(&theta.vartheta, dt, n)?;
        let id = format!("sim_{i:04}");
        let traj = gausslik::simulate(&theta.ls, &acf, n, s.named("data"))?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        ctx.write_csv(&format!("{id}.csv"), &String::from_utf8_lossy(&buf))?;
        params.insert(id, theta);
    }
    // JSON keeps the parameter file out of directory-wide CSV ingestion.
    ctx.write_json("sim_params.json", "simulation-parameters", &params)
}

/// Test priors keyed by family.
fn prior_map(paths: &[std::path::PathBuf]) -> CliResult<BTreeMap<String, TestPrior>> {
    let mut m = BTreeMap::new();
    for p in paths {
        let tp = ctx::read_test_prior(p)?;
        if m.insert(tp.family.label(), tp).is_some() {
            return usage(format!("more than one test prior given for the family of {}", p.display()));
        }
    }
    Ok(m)
}

pub fn compare(ctx: &Ctx, a: &CompareArgs) -> CliResult<()> {
    let Some(list) = a.models.as_deref() else { return usage("--models is required") };
    let families = ctx::parse_models(list)?;
    let mut priors = prior_map(&a.priors)?;
    let models = families
        .iter()
        .map(|&f| {
            let prior = match priors.remove(&f.label()) {
                Some(tp) => PriorSpec::Test(Box::new(tp)),
                None if a.noninformative.unwrap_or(false) => PriorSpec::Conjugate { mniw: conjugate::MniwParams::noninformative() },
                None => return usage(format!("model {f} has no proper prior; pass --prior FILE or --noninformative")),
            };
            prepared(f, prior, a.grid_n)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let odds = match a.odds.as_deref() {
        Some(s) => ctx::parse_floats(s, "--odds")?,
        None => vec![1.0; models.len()],
    };
    let trajs = ctx::load_trajectories(&a.input)?;
    let mut out = String::from("id");
    for m in &models {
        write!(out, ",log_marginal:{}", m.label()).unwrap();
    }
    for m in &models {
        write!(out, ",prob:{}", m.label()).unwrap();
    }
    out.push('\n');
    for (i, t) in trajs.iter().enumerate() {
        progress(format!("compare {} ({}/{})", t.id(), i + 1, trajs.len()));
        let r = selection::compare(&t.increments(), &models, &odds)?;
        let fields = std::iter::once(t.id().to_string())
            .chain(r.log_marginal.iter().map(|v| fmt_f64(*v)))
            .chain(r.probabilities.iter().map(|v| fmt_f64(*v)));
        out.push_str(&csv_line(fields));
    }
    ctx.write_csv("comparison.csv", &out)
}

pub fn hier_fit(ctx: &Ctx, a: &HierFitArgs) -> CliResult<()> {
    let family = ctx::family(&a.model)?;
    let seed = ctx.seed()?;
    let scatter = match a.scatter.as_deref().unwrap_or("draws") {
        "draws" => Scatter::Draws,
        "means" => Scatter::Means,
        s => return usage(format!("--scatter must be draws or means, got '{s}'")),
    };
    let base = match a.base.as_deref().unwrap_or("default") {
        "default" => BaseDensity::Default,
        "flat" => BaseDensity::Flat,
        s => return usage(format!("--base must be default or flat, got '{s}'")),
    };
    let d = GibbsConfig::default();
    let config = HierConfig {
        draws_per_dataset: a.draws_per_dataset.unwrap_or(HierConfig::default().draws_per_dataset),
        gibbs: GibbsConfig { omega: a.omega, n_iter: a.n_iter.unwrap_or(d.n_iter), n_burn: a.n_burn.unwrap_or(d.n_burn), base, scatter },
    };
    let grid = ModelGrid::new(family, ctx::grid_for(family, &PriorSpec::default(), a.model.grid_n)?)?;
    let trajs = ctx::load_trajectories(&a.input)?;
    let data: Vec<_> = trajs.iter().map(Trajectory::increments).collect();
    progress(format!("hierarchical fit of {family} to {} trajectories", data.len()));
    let (tp, draws, approx) = hierarchical::fit_test_prior(&data, &grid, &config, seed)?;
    if draws.low_acceptance() {
        progress("warning: Metropolis acceptance below 1% for some trajectories");
    }
    ctx.write_json("test_prior.json", TEST_PRIOR_KIND, &tp)?;
    ctx.write_json("hier_draws.json", "hier-draws", &draws)?;
    ctx.write_json("normal_approx.json", "normal-approx", &approx)
}

pub fn check(ctx: &Ctx, a: &CheckArgs) -> CliResult<()> {
    let family = ctx::family(&a.model)?;
    let seed = ctx.seed()?;
    let Some(choice) = a.prior.as_deref() else { return usage("--prior is required (noninformative or a test prior file)") };
    let prior = ctx::resolve_prior(Some(choice), family)?;
    if !prior.is_proper() {
        return usage("predictive checks need a proper prior");
    }
    let model = prepared(family, prior, a.model.grid_n)?;
    let trajs = ctx::load_trajectories(&a.input)?;
    unique_ids(&trajs)?;
    let r = a.replicates.unwrap_or(checks::DEFAULT_REPLICATES);
    let lags = match a.lags.as_deref() {
        Some(s) => ctx::parse_floats(s, "--lags")?,
        None => vec![DEFAULT_DT, 0.1, 1.0, 10.0],
    };
    let mut columns: Vec<String> = Vec::new();
    let mut table = Vec::new();
    for (j, t) in trajs.iter().enumerate() {
        progress(format!("check {} ({}/{})", t.id(), j + 1, trajs.len()));
        let x = t.increments();
        let duration = x.len() as f64 * x.dt;
        let stats: Vec<MsdStatistic> =
            lags.iter().filter(|&&l| l <= duration * (1.0 + 1e-12)).map(|&lag_s| MsdStatistic { lag_s }).collect();
        if stats.len() < lags.len() {
            progress(format!("{}: skipping lags longer than the trajectory ({duration} s)", t.id()));
        }
        let s = seed.child(j as u64);
        let mut res = checks::posterior_predictive_pvalue(&x, &model, &stats, r, s.named("msd"))?;
        res.extend(checks::residual_pvalue_ks(&x, &model, r, s.named("ks"))?);
        let mut body = String::from("statistic,observed,p_value,p_greater,p_geq,replicates\n");
        for p in &res {
            body.push_str(&csv_line([
                p.statistic.clone(),
                fmt_f64(p.observed),
                fmt_f64(p.p_value),
                fmt_f64(p.p_greater),
                fmt_f64(p.p_geq),
                p.replicates.len().to_string(),
            ]));
            if !columns.contains(&p.statistic) {
                columns.push(p.statistic.clone());
            }
        }
        ctx.write_csv(&format!("{}.pvalues.csv", t.id()), &body)?;
        table.push((t.id().to_string(), res));
    }
    let mut out = csv_line(std::iter::once("id".to_string()).chain(columns.iter().cloned()));
    for (id, res) in &table {
        let cell = |c: &String| res.iter().find(|p| &p.statistic == c).map_or_else(String::new, |p| fmt_f64(p.p_value));
        out.push_str(&csv_line(std::iter::once(id.clone()).chain(columns.iter().map(cell))));
    }
    ctx.write_csv("pvalues_table.csv", &out)?;

    if let Some(n_paths) = a.ensemble {
        if !matches!(model.spec.prior, PriorSpec::Test(_)) {
            return usage("--ensemble needs a test prior");
        }
        let x = trajs[0].increments();
        let max_lag = trajectory::default_max_lag(x.len());
        let curves = checks::prior_predictive_msd(&model, n_paths, x.len(), x.dt, max_lag, seed.named("ensemble"))?;
        let mut body = String::from("replicate,lag_s,msd_um2\n");
        for (i, c) in curves.iter().enumerate() {
            for (l, v) in c.lags.iter().zip(&c.values) {
                body.push_str(&csv_line([i.to_string(), fmt_f64(*l), fmt_f64(*v)]));
            }
        }
        ctx.write_csv("prior_predictive_msd.csv", &body)?;
    }
    Ok(())
}

pub fn residuals(ctx: &Ctx, a: &ResidualsArgs) -> CliResult<()> {
    let family = ctx::family(&a.model)?;
    let seed = ctx.seed()?;
    let model = prepared(family, ctx::resolve_prior(a.prior.as_deref(), family)?, a.model.grid_n)?;
    let trajs = ctx::load_trajectories(&a.input)?;
    unique_ids(&trajs)?;
    let n_points = a.density_points.unwrap_or(101).max(2);
    let grid: Vec<f64> = (0..n_points).map(|i| -5.0 + 10.0 * i as f64 / (n_points - 1) as f64).collect();
    for (j, t) in trajs.iter().enumerate() {
        let draws = checks::residual_draws(&t.increments(), &model, a.draws.unwrap_or(10), seed.child(j as u64))?;
        let mut body = String::from("draw,step,z1,z2\n");
        for (d, z) in draws.iter().enumerate() {
            for (n, row) in z.z.iter().enumerate() {
                body.push_str(&csv_line([d.to_string(), (n + 1).to_string(), fmt_f64(row[0]), fmt_f64(row[1])]));
            }
        }
        ctx.write_csv(&format!("{}.residuals.csv", t.id()), &body)?;
        let dens = checks::residual_density(&draws, &grid);
        let mut body = csv_line(std::iter::once("z".to_string()).chain((0..draws.len()).map(|d| format!("draw_{d}"))));
        for (k, z) in grid.iter().enumerate() {
            body.push_str(&csv_line(std::iter::once(fmt_f64(*z)).chain(dens.iter().map(|d| fmt_f64(d[k])))));
        }
        ctx.write_csv(&format!("{}.residual_density.csv", t.id()), &body)?;
    }
    Ok(())
}

pub fn table1(ctx: &Ctx, a: &Table1Args) -> CliResult<()> {
    let seed = ctx.seed()?;
    let families = ctx::parse_models(a.models.as_deref().unwrap_or("fbm,gle:2"))?;
    let full = a.full_scale.unwrap_or(false);
    let n_datasets = a.n_datasets.unwrap_or(if full { 500 } else { 50 });
    let n_steps = a.n_steps.unwrap_or(if full { 1800 } else { 300 });
    let mut priors = prior_map(&a.priors)?;
    let models = families
        .iter()
        .map(|&f| match priors.remove(&f.label()) {
            Some(tp) => prepared(f, PriorSpec::Test(Box::new(tp)), a.grid_n),
            None => Ok(selection::desk_scale_model(f, a.grid_n)?),
        })
        .collect::<CliResult<Vec<_>>>()?;
    progress(format!("selection study: {n_datasets} datasets x {} models, N = {n_steps}", models.len()));
    let s = selection::selection_study(&models, n_datasets, n_steps, a.dt.unwrap_or(DEFAULT_DT), seed)?;
    let mut body = String::from("generator,alternative,mean_prob,win_rate,n_used\n");
    for c in &s.cells {
        body.push_str(&csv_line([
            c.generator.clone(),
            c.alternative.clone(),
            fmt_f64(c.mean_prob),
            fmt_f64(c.win_rate),
            c.n_used.to_string(),
        ]));
        progress(format!("{} vs {}: {:.0} ({:.0})", c.generator, c.alternative, 100.0 * c.mean_prob, 100.0 * c.win_rate));
    }
    ctx.write_csv("table1.csv", &body)?;
    let mut body = csv_line(
        ["generator".to_string(), "index".into()]
            .into_iter()
            .chain(s.labels.iter().map(|l| format!("log_marginal:{l}")))
            .chain(std::iter::once("error".into())),
    );
    for r in &s.datasets {
        body.push_str(&csv_line(
            [r.generator.clone(), r.index.to_string()]
                .into_iter()
                .chain(r.log_marginal.iter().map(|v| v.map_or_else(String::new, fmt_f64)))
                .chain(std::iter::once(r.error.clone().unwrap_or_default().replace(',', ";"))),
        ));
    }
    if s.n_failed > 0 {
        progress(format!("{} datasets failed and were excluded", s.n_failed));
    }
    ctx.write_csv("table1_datasets.csv", &body)
}

pub fn s4(ctx: &Ctx, a: &S4Args) -> CliResult<()> {
    let seed = ctx.seed()?;
    let families = ctx::parse_models(a.models.as_deref().unwrap_or("fbm,gle:200"))?;
    let [f0, f1] = families[..] else { return usage("--models needs exactly two models") };
    let trajs = ctx::load_trajectories(&a.input)?;
    let [base] = &trajs[..] else { return usage("the sensitivity study takes exactly one base trajectory") };
    let g0 = ModelGrid::new(f0, ctx::grid_for(f0, &PriorSpec::default(), a.grid_n)?)?;
    let g1 = ModelGrid::new(f1, ctx::grid_for(f1, &PriorSpec::default(), a.grid_n)?)?;
    let n_sim = a.n_sim.unwrap_or(20);
    progress(format!("prior sensitivity: {n_sim} datasets from each of {f0}, {f1}"));
    let t = selection::prior_sensitivity_study(&base.increments(), [&g0, &g1], n_sim, seed)?;
    let mut body = String::from("generator,index,prior,prob_first\n");
    for r in &t.rows {
        body.push_str(&csv_line([r.generator.clone(), r.index.to_string(), r.prior.label().into(), fmt_f64(r.prob_first)]));
    }
    ctx.write_csv("s4.csv", &body)?;
    let mut body = String::from("generator,prior,second_wins,correct\n");
    for g in &t.labels {
        for p in [selection::SensitivityPrior::Noninformative, selection::SensitivityPrior::DoubleUse] {
            let (second, correct) = t.summary(g, p);
            body.push_str(&csv_line([g.clone(), p.label().into(), fmt_f64(second), fmt_f64(correct)]));
        }
    }
    ctx.write_csv("s4_summary.csv", &body)?;
    ctx.write_json("s4_mle.json", "mle", &t.mle)
}
