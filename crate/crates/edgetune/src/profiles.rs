//! Device profile lookup.
//!
//! A profile argument is resolved as a file path first, then as
//! `<name>.json` inside the directory named by [`PROFILE_DIR_ENV`], then as
//! one of the built-in profiles.

use std::path::{Path, PathBuf};

use edgetune_core::device::DeviceProfile;

use crate::error::{AppError, AppResult};

/// Directory searched for `<name>.json` before the built-ins.
pub const PROFILE_DIR_ENV: &str = "EDGETUNE_PROFILE_DIR";

const BUILTIN: [(&str, &str); 2] = [
    ("synthetic-orin", include_str!("../profiles/synthetic-orin.json")),
    ("synthetic-tx2", include_str!("../profiles/synthetic-tx2.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Option<DeviceProfile> {
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name)?;
    Some(serde_json::from_str(text).expect("built-in profile parses"))
}

pub fn parse_profile(text: &str, origin: &str) -> AppResult<DeviceProfile> {
    let p: DeviceProfile = serde_json::from_str(text).map_err(|e| AppError::Data(format!("{origin}: {e}")))?;
    p.validate().map_err(|e| AppError::Data(format!("{origin}: {e}")))?;
    Ok(p)
}

fn read_profile(path: &Path) -> AppResult<DeviceProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_profile(&text, &path.display().to_string())
}

/// Resolves `spec` and optionally swaps in one of its named workloads.
pub fn load(spec: &str, workload: Option<&str>) -> AppResult<DeviceProfile> {
    let profile = resolve(spec)?;
    match workload {
        Some(w) => Ok(profile.with_workload(w)?),
        None => Ok(profile),
    }
}

fn resolve(spec: &str) -> AppResult<DeviceProfile> {
    let path = Path::new(spec);
    if path.is_file() {
        return read_profile(path);
    }
    if let Some(dir) = std::env::var_os(PROFILE_DIR_ENV) {
        let candidate: PathBuf = Path::new(&dir).join(format!("{spec}.json"));
        if candidate.is_file() {
            return read_profile(&candidate);
        }
    }
    builtin(spec).ok_or_else(|| {
        let known: Vec<&str> = builtin_names().collect();
        AppError::Usage(format!("profile {spec:?} is neither a file nor a known profile ({})", known.join(", ")))
    })
}
