//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/rht.h")).unwrap();
    for name in [
        "rht_model_from_json",
        "rht_model_free",
        "rht_criticality",
        "rht_limit_law",
        "rht_limit_law_free",
        "rht_limit_law_coefficients",
        "rht_limit_law_coefficient_exact",
        "rht_limit_law_is_forest",
        "rht_pgf",
        "rht_limiting_laplace",
        "rht_moment_total",
        "rht_simulate_means",
        "rht_last_error",
        "typedef struct RhtModel RhtModel",
        "RHT_STATUS_BUFFER_TOO_SMALL = 9",
    ] {
        assert!(header.contains(name), "{name} missing from rht.h");
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("librht_ffi.a");
    lib.exists().then_some(lib)
}

fn has_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_and_runs() {
    let (Some(lib), true) = (static_lib(), has_cc()) else {
        eprintln!("skipped: no C compiler or static library");
        return;
    };
    let out = std::env::temp_dir().join(format!("rht_smoke_{}", std::process::id()));
    let dir = crate_dir();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&out)
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(Path::new(&out)).output().unwrap();
    let _ = std::fs::remove_file(&out);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {stdout}", run.status.code());
    assert!(stdout.contains("lambda*=1 K=2 shape=2x2 A[1][1]=1"), "{stdout}");
    assert!(stdout.contains("laplace(1,1)=0.250000"), "{stdout}");
}
