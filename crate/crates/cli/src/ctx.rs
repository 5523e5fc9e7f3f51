//! Shared plumbing: inputs, model and prior resolution, provenance-stamped outputs.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;
use subdiff::conjugate::{Axis, GridSpec, MniwParams, PriorSpec};
use subdiff::hierarchical::TestPrior;
use subdiff::output::{read_envelope, Envelope, Provenance};
use subdiff::trajectory::{ingest_csv, Trajectory};
use subdiff::{ModelFamily, Seed};

use crate::args::{InputArgs, ModelArgs};
use crate::error::{usage, CliResult};

pub const TEST_PRIOR_KIND: &str = "test-prior";

pub struct Ctx {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub provenance: Provenance,
}

impl Ctx {
    pub fn seed(&self) -> CliResult<Seed> {
        match self.seed {
            Some(s) => Ok(Seed(s)),
            None => usage("this command is stochastic and requires --seed"),
        }
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    /// Writes CSV `body` after the provenance comment lines.
    pub fn write_csv(&self, name: &str, body: &str) -> CliResult<()> {
        let mut text = self.provenance.csv_comment();
        text.push_str(body);
        std::fs::write(self.path(name)?, text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, kind: &str, data: T) -> CliResult<()> {
        let env = Envelope::new(kind, Some(self.provenance.clone()), data);
        std::fs::write(self.path(name)?, env.to_json()? + "\n")?;
        Ok(())
    }
}

pub fn progress(msg: impl AsRef<str>) {
    eprintln!("[subdiff] {}", msg.as_ref());
}

/// CSV files named by `inputs`, expanding directories in sorted order.
pub fn input_files(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    if inputs.is_empty() {
        return usage("no input trajectories given");
    }
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return usage("input directories contain no .csv files");
    }
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "trajectory".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_trajectories(input: &InputArgs) -> CliResult<Vec<Trajectory>> {
    input_files(&input.inputs)?
        .iter()
        .map(|f| {
            let id = stem(f);
            let file = File::open(f).map_err(|e| subdiff::Error::Data(format!("{}: {e}", f.display())))?;
            Ok(ingest_csv(file, &id, input.dt)?)
        })
        .collect()
}

pub fn parse_family(model: Option<&str>, modes: Option<usize>) -> CliResult<ModelFamily> {
    match (model.map(str::to_ascii_lowercase).as_deref(), modes) {
        (None, _) => usage("--model is required"),
        (Some("fbm"), _) => Ok(ModelFamily::Fbm),
        (Some("gle"), Some(k)) => Ok(ModelFamily::gle(k)?),
        (Some("gle"), None) => usage("--modes is required for --model gle"),
        (Some(other), _) => Ok(other.parse()?),
    }
}

pub fn family(m: &ModelArgs) -> CliResult<ModelFamily> {
    parse_family(m.model.as_deref(), m.modes)
}

pub fn parse_models(list: &str) -> CliResult<Vec<ModelFamily>> {
    let v = list.split(',').map(|s| Ok(s.trim().parse::<ModelFamily>()?)).collect::<CliResult<Vec<_>>>()?;
    if v.is_empty() {
        return usage("empty model list");
    }
    Ok(v)
}

pub fn parse_floats(list: &str, what: &str) -> CliResult<Vec<f64>> {
    list.split(',')
        .map(|s| {
            let s = s.trim();
            if let Some((a, b)) = s.split_once('/') {
                if let (Ok(a), Ok(b)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                    return Ok(a / b);
                }
            }
            s.parse::<f64>().or_else(|_| usage(format!("cannot parse '{s}' in {what}")))
        })
        .collect()
}

pub fn read_test_prior(path: &Path) -> CliResult<TestPrior> {
    let text = std::fs::read_to_string(path).map_err(|e| subdiff::Error::Data(format!("{}: {e}", path.display())))?;
    Ok(read_envelope::<TestPrior>(&text, TEST_PRIOR_KIND)?.data)
}

/// `default`, `noninformative`, or the path of a test prior for `family`.
pub fn resolve_prior(choice: Option<&str>, family: ModelFamily) -> CliResult<PriorSpec> {
    match choice.unwrap_or("default") {
        "default" => Ok(PriorSpec::default()),
        "noninformative" => Ok(PriorSpec::Conjugate { mniw: MniwParams::noninformative() }),
        path => {
            let tp = read_test_prior(Path::new(path))?;
            if tp.family != family {
                return usage(format!("test prior {path} is for {}, not {family}", tp.family));
            }
            Ok(PriorSpec::Test(Box::new(tp)))
        }
    }
}

/// Adapted grid for test priors, otherwise the default box with `grid_n` points per axis.
pub fn grid_for(family: ModelFamily, prior: &PriorSpec, grid_n: Option<usize>) -> CliResult<GridSpec> {
    if let PriorSpec::Test(tp) = prior {
        let n = grid_n.unwrap_or(match family {
            ModelFamily::Fbm => 100,
            ModelFamily::Gle { .. } => 30,
        });
        return Ok(tp.adapted_grid(n)?);
    }
    let d = GridSpec::default_for(family);
    let Some(n) = grid_n else { return Ok(d) };
    let re = |a: Axis| Axis::new(a.lo, a.hi, n);
    Ok(match d {
        GridSpec::Fbm { hurst } => GridSpec::Fbm { hurst: re(hurst)? },
        GridSpec::Gle { alpha, log_tau } => GridSpec::Gle { alpha: re(alpha)?, log_tau: re(log_tau)? },
    })
}
