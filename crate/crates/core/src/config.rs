//! Plain-text experiment configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a
//! comment. Command-line flags are turned into the same pairs and applied
//! after the file, so flags win. A `preset` key, wherever it appears,
//! selects the base configuration that the other keys modify.
//!
//! | key | value |
//! |-----|-------|
//! | `preset` | `su-4x4` or `mu-16x4x4` |
//! | `mode` | `su` or `mu` |
//! | `n`, `m`, `k` | transmit antennas, receive antennas per user, users |
//! | `snr` | comma-separated dB values (`inf` = noiseless) |
//! | `snr_range` | `start:stop:step` in dB, inclusive |
//! | `trials`, `seed` | Monte Carlo trials per SNR point, base seed |
//! | `convention` | `unit`, `half` or `per-tx` |
//! | `averaging` | `db-domain` or `linear-domain` |
//! | `b`, `d` | features per user, reals per feature |
//! | `mu` | select factor in `[0, 1]` (default 0.3) |
//! | `policy` | `importance`, `random` or `unsorted` |
//! | `estimator` | `perfect`, `ls`, `mmse` or `refined` |
//! | `pilot_length` | pilot symbols per estimate (default `n`) |
//! | `importance` | `exponential[:decay]`, `uniform` or `step[:fraction[:low]]` |
//! | `path` | `decomposed` or `full-matrix` |
//! | `non_target_rx` | `isolated` or `superposed` |

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

pub const KEYS: &[&str] = &[
    "preset",
    "mode",
    "n",
    "m",
    "k",
    "snr",
    "snr_range",
    "trials",
    "seed",
    "convention",
    "averaging",
    "b",
    "d",
    "mu",
    "policy",
    "estimator",
    "pilot_length",
    "importance",
    "path",
    "non_target_rx",
];

pub const PRESETS: &[&str] = &["su-4x4", "mu-16x4x4"];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "su-4x4" => Ok(ExperimentConfig::su(4, 4)),
        "mu-16x4x4" => Ok(ExperimentConfig::mu(16, 4, 4)),
        other => Err(Error::config(
            "preset",
            format!("unknown `{other}` (expected {})", PRESETS.join(" | ")),
        )),
    }
}

/// Parses `key = value` lines. Keys are checked against [`KEYS`].
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(
                key,
                format!("unknown key at {}:{}", path.display(), i + 1),
            ));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pairs(&text, path)
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not a valid number")))
}

fn snr_list(value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| num("snr", v.trim())).collect()
}

/// `start:stop:step`, inclusive of `stop` when it lies on the grid.
pub fn snr_range(value: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = value
        .split(':')
        .map(|v| num("snr_range", v.trim()))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(Error::config("snr_range", "expected start:stop:step"));
    };
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::config(
            "snr_range",
            "need finite start <= stop and a positive step",
        ));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "preset" => {}
        "mode" => cfg.mode = value.parse()?,
        "n" => cfg.n_tx = num(key, value)?,
        "m" => cfg.m_rx = num(key, value)?,
        "k" => cfg.users = num(key, value)?,
        "snr" => cfg.snr_db_list = snr_list(value)?,
        "snr_range" => cfg.snr_db_list = snr_range(value)?,
        "trials" => cfg.trials = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "convention" => cfg.convention = value.parse()?,
        "averaging" => cfg.averaging = value.parse()?,
        "b" => cfg.feature_count = num(key, value)?,
        "d" => cfg.feature_dim = num(key, value)?,
        "mu" => cfg.mu_select = num(key, value)?,
        "policy" => cfg.policy = value.parse()?,
        "estimator" => cfg.estimator = value.parse()?,
        "pilot_length" => cfg.pilot_length = Some(num(key, value)?),
        "importance" => cfg.importance = value.parse()?,
        "path" => cfg.path = value.parse()?,
        "non_target_rx" => cfg.non_target_rx = value.parse()?,
        other => return Err(Error::config(other, "unknown key")),
    }
    Ok(())
}

/// Builds and validates a config from ordered pairs; later pairs win.
pub fn build_config(pairs: &[(String, String)]) -> Result<ExperimentConfig> {
    let base = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "preset")
        .map(|(_, v)| preset(v))
        .transpose()?;
    let mut cfg = base.unwrap_or_default();
    for (k, v) in pairs {
        apply(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The pairs that rebuild `cfg` exactly under [`build_config`].
pub fn to_pairs(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let snr: Vec<String> = cfg.snr_db_list.iter().map(f64::to_string).collect();
    let mut out = vec![
        ("mode", cfg.mode.name().to_string()),
        ("n", cfg.n_tx.to_string()),
        ("m", cfg.m_rx.to_string()),
        ("k", cfg.users.to_string()),
        ("snr", snr.join(",")),
        ("trials", cfg.trials.to_string()),
        ("seed", cfg.seed.to_string()),
        ("convention", cfg.convention.to_string()),
        ("averaging", cfg.averaging.to_string()),
        ("b", cfg.feature_count.to_string()),
        ("d", cfg.feature_dim.to_string()),
        ("mu", cfg.mu_select.to_string()),
        ("policy", cfg.policy.name().to_string()),
        ("estimator", cfg.estimator.to_string()),
        ("importance", cfg.importance.to_string()),
        ("path", cfg.path.name().to_string()),
        ("non_target_rx", cfg.non_target_rx.name().to_string()),
    ];
    if let Some(p) = cfg.pilot_length {
        out.push(("pilot_length", p.to_string()));
    }
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Renders pairs in the config file format.
pub fn render_pairs(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Convention;
    use crate::estimation::Estimator;
    use crate::harness::Mode;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn presets() {
        let su = build_config(&pairs(&[("preset", "su-4x4")])).unwrap();
        assert_eq!((su.n_tx, su.m_rx, su.users, su.mode), (4, 4, 1, Mode::Su));
        let mu = build_config(&pairs(&[("preset", "mu-16x4x4")])).unwrap();
        assert_eq!((mu.n_tx, mu.m_rx, mu.users, mu.mode), (16, 4, 4, Mode::Mu));
        assert_eq!(su.mu_select, 0.3);
        assert!(preset("mu-8x2x4").is_err());
    }

    #[test]
    fn file_then_flags() {
        let text =
            "# sweep\npreset = su-4x4\ntrials = 50  # short\nestimator = ls\n\nconvention = unit\n";
        let mut p = parse_pairs(text, Path::new("x.cfg")).unwrap();
        p.extend(pairs(&[("trials", "70")]));
        let cfg = build_config(&p).unwrap();
        assert_eq!(cfg.trials, 70);
        assert_eq!(cfg.estimator, Estimator::Ls);
        assert_eq!(cfg.convention, Convention::Unit);
    }

    #[test]
    fn preset_is_the_base_wherever_it_appears() {
        let cfg = build_config(&pairs(&[("trials", "9"), ("preset", "mu-16x4x4")])).unwrap();
        assert_eq!((cfg.n_tx, cfg.trials), (16, 9));
    }

    #[test]
    fn errors_name_the_field() {
        let field = |p: &[(&str, &str)]| match build_config(&pairs(p)) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field(&[("mode", "mu"), ("n", "5"), ("m", "2"), ("k", "2")]),
            "k"
        );
        assert_eq!(field(&[("trials", "many")]), "trials");
        assert_eq!(field(&[("mu", "2")]), "mu");
        assert_eq!(field(&[("policy", "greedy")]), "policy");
        match parse_pairs("colour = red\n", Path::new("a.cfg")) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "colour"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_pairs("ok = 1\njunk\n", Path::new("a.cfg")),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            parse_pairs("trials = 1\njunk\n", Path::new("a.cfg")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn pairs_round_trip() {
        let cfg = build_config(&pairs(&[
            ("preset", "mu-16x4x4"),
            ("snr", "-8.25,0.1,inf"),
            ("importance", "step:0.25:0.05"),
            ("pilot_length", "32"),
            ("path", "full-matrix"),
            ("non_target_rx", "superposed"),
            ("averaging", "linear"),
            ("estimator", "refined"),
        ]))
        .unwrap();
        let text = render_pairs(&to_pairs(&cfg));
        let back = build_config(&parse_pairs(&text, Path::new("snapshot.cfg")).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(
            build_config(&to_pairs(&ExperimentConfig::default())).unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn snr_parsing() {
        assert_eq!(
            snr_range("-8:22:6").unwrap(),
            vec![-8.0, -2.0, 4.0, 10.0, 16.0, 22.0]
        );
        assert_eq!(snr_range("0:1:0.25").unwrap().len(), 5);
        assert!(snr_range("0:1").is_err());
        assert!(snr_range("5:1:1").is_err());
        assert_eq!(
            snr_list("-8, 0,inf").unwrap(),
            vec![-8.0, 0.0, f64::INFINITY]
        );
    }
}
