//! The JSON fixtures are the running example written through the document
//! schemas. Set `RA_BLESS=1` to rewrite them.

use std::path::PathBuf;

use relalign::cli::{to_json, LogDocument, ModelDocument};
use relalign::running_example as rx;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn check(name: &str, text: String) {
    let path = fixture(name);
    if std::env::var("RA_BLESS").is_ok_and(|v| v == "1") {
        std::fs::write(&path, &text).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(on_disk, text, "{name} is stale, rerun with RA_BLESS=1");
}

#[test]
fn fixtures_match_the_running_example() {
    check("model.json", to_json(&ModelDocument::from_model(&rx::model())));
    for (name, l) in [
        ("log1.json", rx::log_one()),
        ("log2.json", rx::log_two()),
        ("log3.json", rx::log_three()),
        ("log4.json", rx::log_four()),
        ("system1.json", rx::system_one()),
    ] {
        check(name, to_json(&LogDocument::from_log(&l)));
    }
}
