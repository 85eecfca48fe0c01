use std::path::PathBuf;

// Regenerates the committed C header from the extern "C" surface. The file
// lives in-tree so downstream builds can consume it without running cargo.
fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("embedlab.h");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        Err(e) => {
            // cbindgen runs on the pristine sources; failing to parse them
            // is a build bug, not an environment problem.
            panic!("cbindgen failed: {e}");
        }
    }
}
