use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::layers::ModelConfig;
use crate::rng::SEED_ENV;
use crate::training::TrainConfig;

/// Keys describing where data lives and which fold to run.
pub const DATA_KEYS: &[&str] = &[
    "features_dir",
    "annotations_dir",
    "out_dir",
    "folds",
    "fold",
    "official_train",
    "official_val",
];

pub fn is_known_key(key: &str) -> bool {
    ModelConfig::KEYS.contains(&key) || TrainConfig::KEYS.contains(&key) || DATA_KEYS.contains(&key)
}

/// Parses flat `key = value` text. `#` starts a comment; blank lines are
/// skipped; unknown and repeated keys are errors.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !is_known_key(k) {
            return Err(err(format!("unknown config key `{k}`")));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(format!("key `{k}` given twice")));
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Parses `--set key=value` overrides.
pub fn parse_overrides(sets: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
        let k = k.trim();
        if !is_known_key(k) {
            return Err(Error::Config(format!("unknown config key `{k}`")));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Seed for commands that take one: explicit value, else `MAMBA_VA_SEED`, else 0.
pub fn seed_or_env(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not a u64"))),
        Err(_) => Ok(0),
    }
}

/// Everything a training run needs, after validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub features_dir: PathBuf,
    pub annotations_dir: PathBuf,
    pub out_dir: PathBuf,
    pub folds: usize,
    pub fold: usize,
    pub official_train: Option<PathBuf>,
    pub official_val: Option<PathBuf>,
    /// Whether `in_dim` was given; otherwise it is taken from the data.
    pub in_dim_explicit: bool,
}

impl RunConfig {
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !is_known_key(k)) {
            return Err(Error::Config(format!("unknown config key `{k}`")));
        }
        let mut pairs = pairs.clone();
        if !pairs.contains_key("seed") {
            pairs.insert("seed".into(), seed_or_env(None)?.to_string());
        }
        let mut model = ModelConfig::default();
        model.apply_pairs(&pairs)?;
        let mut train = TrainConfig::default();
        train.apply_pairs(&pairs)?;
        let path = |k: &str| pairs.get(k).map(PathBuf::from);
        let required = |k: &str| {
            path(k).ok_or_else(|| Error::Config(format!("missing required key `{k}`")))
        };
        let int = |k: &str, default: usize| -> Result<usize> {
            pairs.get(k).map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value `{v}` for `{k}`")))
            })
        };
        let cfg = Self {
            features_dir: required("features_dir")?,
            annotations_dir: required("annotations_dir")?,
            out_dir: path("out_dir").unwrap_or_else(|| PathBuf::from("run")),
            folds: int("folds", 5)?,
            fold: int("fold", 0)?,
            official_train: path("official_train"),
            official_val: path("official_val"),
            in_dim_explicit: pairs.contains_key("in_dim"),
            model,
            train,
        };
        cfg.train.validate()?;
        if cfg.folds < 2 || cfg.fold >= cfg.folds {
            return Err(Error::Config(format!(
                "fold {} is out of range for {} folds",
                cfg.fold, cfg.folds
            )));
        }
        if cfg.official_train.is_some() != cfg.official_val.is_some() {
            return Err(Error::Config(
                "official_train and official_val must be given together".into(),
            ));
        }
        Ok(cfg)
    }

    /// Fully resolved configuration in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(String, String)> = self.model.to_pairs();
        pairs.extend(self.train.to_pairs());
        let disp = |p: &Path| p.display().to_string();
        pairs.push(("features_dir".into(), disp(&self.features_dir)));
        pairs.push(("annotations_dir".into(), disp(&self.annotations_dir)));
        pairs.push(("out_dir".into(), disp(&self.out_dir)));
        pairs.push(("folds".into(), self.folds.to_string()));
        pairs.push(("fold".into(), self.fold.to_string()));
        if let (Some(t), Some(v)) = (&self.official_train, &self.official_val) {
            pairs.push(("official_train".into(), disp(t)));
            pairs.push(("official_val".into(), disp(v)));
        }
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Reads a list of video ids, one per line.
pub fn load_id_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BTreeMap<String, String> {
        parse_config(
            "features_dir = f\nannotations_dir = a # labels\n\nseed = 3\n",
            Path::new("run.cfg"),
        )
        .unwrap()
    }

    #[test]
    fn parses_and_resolves() {
        let cfg = RunConfig::from_pairs(&base()).unwrap();
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.features_dir, PathBuf::from("f"));
        assert!(!cfg.in_dim_explicit);
        let again = parse_config(&cfg.to_text(), Path::new("resolved.cfg")).unwrap();
        assert_eq!(RunConfig::from_pairs(&again).unwrap(), RunConfig { in_dim_explicit: true, ..cfg });
    }

    #[test]
    fn unknown_and_repeated_keys_are_rejected() {
        let p = Path::new("x.cfg");
        match parse_config("epochs = 2\nbogus = 1\n", p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_config("epochs = 2\nepochs = 3\n", p).is_err());
        assert!(parse_overrides(&["nope=1".into()]).is_err());
    }

    #[test]
    fn missing_data_dir_is_reported() {
        let mut pairs = base();
        pairs.remove("features_dir");
        let err = RunConfig::from_pairs(&pairs).unwrap_err().to_string();
        assert!(err.contains("features_dir"));
    }
}
