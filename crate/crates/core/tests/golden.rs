use std::path::Path;

use dmm_core::bench::{builtin, load_config, BUILTINS};

#[test]
fn builtins_match_checked_in_configs() {
    for name in BUILTINS {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(format!("{name}.json"));
        let from_file = load_config(path.to_str().unwrap()).unwrap();
        assert_eq!(builtin(name).unwrap(), from_file, "{name}");
    }
}
