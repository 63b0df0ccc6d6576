//! Replays the checked-in fuzz corpora through the parsers on stable.

use std::fs;
use std::path::{Path, PathBuf};

use dmm_core::basis::AngularBasis;
use dmm_core::bench::{compare_profiles, parse_config, parse_moments, parse_profile, ModelId, Norm};
use dmm_core::realizability::{check, MomentVector, DEFAULT_TOLERANCE};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, String::from_utf8_lossy(&bytes).into_owned())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds() {
    let accepted = seeds("config_json").into_iter().filter(|(_, text)| parse_config(text).is_ok()).count();
    assert_eq!(accepted, 2);
}

#[test]
fn profile_seeds() {
    for (path, text) in seeds("profile_csv") {
        if let Ok(p) = parse_profile(&text) {
            assert_eq!(compare_profiles(&p, &p, Norm::L1).unwrap(), 0.0, "{}", path.display());
        }
    }
}

#[test]
fn moment_seeds() {
    for (_, text) in seeds("moment_list") {
        if let Ok(values) = parse_moments(&text) {
            if let Ok(u) = MomentVector::new(AngularBasis::dmm2(), values) {
                let _ = check(&u, DEFAULT_TOLERANCE);
            }
        }
    }
}

#[test]
fn model_id_seeds() {
    for (_, text) in seeds("model_id") {
        if let Ok(m) = text.parse::<ModelId>() {
            assert_eq!(m.to_string().parse::<ModelId>().unwrap(), m);
        }
    }
}
