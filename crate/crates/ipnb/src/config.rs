//! JSON scenario and spec files.

use std::fs;
use std::path::Path;

use ipnb_core::scenario::ScenarioConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Environment variable that replaces any seed read from a file.
pub const SEED_ENV: &str = "IPNB_SEED";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses an override value; `None` and empty strings leave `seed` alone.
pub fn apply_seed_override(seed: &mut u64, value: Option<&str>) -> Result<()> {
    match value.map(str::trim) {
        None | Some("") => Ok(()),
        Some(v) => {
            *seed = v.parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            Ok(())
        }
    }
}

pub fn env_seed_override(seed: &mut u64) -> Result<()> {
    apply_seed_override(seed, std::env::var(SEED_ENV).ok().as_deref())
}

/// Reads and validates a scenario file, honouring [`SEED_ENV`].
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = read_json(path)?;
    env_seed_override(&mut cfg.seed)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parses_or_rejects() {
        let mut s = 5;
        apply_seed_override(&mut s, None).unwrap();
        assert_eq!(s, 5);
        apply_seed_override(&mut s, Some(" 42 ")).unwrap();
        assert_eq!(s, 42);
        let err = apply_seed_override(&mut s, Some("-1")).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
        assert_eq!(s, 42);
    }

    #[test]
    fn scenario_round_trips_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let cfg = ScenarioConfig::desk();
        write_json(&p, &cfg).unwrap();
        let back: ScenarioConfig = read_json(&p).unwrap();
        assert_eq!(back, cfg);

        let mut v = serde_json::to_value(&cfg).unwrap();
        v["bogus"] = 1.into();
        write_json(&p, &v).unwrap();
        assert!(matches!(read_json::<ScenarioConfig>(&p), Err(Error::Json { .. })));
    }

    #[test]
    fn invalid_scenario_maps_to_config_exit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        write_json(&p, &ScenarioConfig { ns: 3, ..ScenarioConfig::desk() }).unwrap();
        assert_eq!(load_scenario(&p).unwrap_err().exit_code(), crate::error::exit::CONFIG);
    }
}
