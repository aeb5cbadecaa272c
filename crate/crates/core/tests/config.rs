//! Configuration documents: defaults, validation paths and the sample snapshot.

use std::path::Path;

use holotile::io::{load_config, parse_config};
use holotile::Error;

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn sample_config_matches_snapshot() {
    let cfg = load_config(&repo_file("configs/sample.toml")).unwrap();
    let got = serde_json::to_string_pretty(&cfg).unwrap() + "\n";
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sample_config.json");
    if std::env::var_os("HOLOTILE_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn empty_document_gives_defaults() {
    let cfg = parse_config("", Path::new("empty.toml")).unwrap();
    assert_eq!(cfg.optical.pitch, 3.74e-6);
    assert_eq!(cfg.optical.wavelengths, vec![680e-9, 520e-9, 450e-9]);
    assert_eq!(cfg.train.adam.lr, 5e-4);
    assert_eq!(cfg.train.adam.beta1, 0.9);
    assert_eq!(cfg.train.adam.beta2, 0.999);
    assert_eq!(cfg.pipeline.optical, cfg.optical);
}

#[test]
fn errors_name_the_field() {
    let field = |text: &str| match parse_config(text, Path::new("t.toml")) {
        Err(Error::Config { field, .. }) => field,
        other => panic!("expected a config error, got {other:?}"),
    };
    assert_eq!(field("[optical]\npitch = -1.0\n"), "optical.pitch");
    assert_eq!(field("[pipeline]\nscale = 3\n"), "pipeline.scale");
    assert_eq!(field("[pipeline.lfmn]\nfeatures = 5\n"), "pipeline.lfmn.features");
    assert_eq!(field("[pipeline]\nmerge = \"blend\"\n"), "pipeline.merge");
    assert_eq!(field("[train.adam]\nlr = 0.0\n"), "train.adam.lr");
}

#[test]
fn malformed_toml_is_a_format_error() {
    assert!(matches!(
        parse_config("[optical\n", Path::new("broken.toml")),
        Err(Error::Format { .. })
    ));
}
