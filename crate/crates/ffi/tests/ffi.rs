use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use etpoisson_ffi::*;

fn last_error() -> String {
    let p = etp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn manufactured(nx: usize, ny: usize) -> *mut EtpInstance {
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { etp_instance_manufactured(nx, ny, &mut inst) }, EtpStatus::Ok);
    inst
}

fn config(pes: usize) -> *mut EtpConfig {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(etp_config_new(&mut cfg), EtpStatus::Ok);
        assert_eq!(etp_config_set_pes(cfg, pes), EtpStatus::Ok);
    }
    cfg
}

#[test]
fn solve_through_handles() {
    let inst = manufactured(32, 16);
    let cfg = config(4);
    unsafe {
        assert_eq!(etp_instance_cells(inst), 512);
        assert_eq!(etp_config_set_event(cfg, 200.0, 0.8, 200), EtpStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(etp_run(inst, cfg, &mut report), EtpStatus::Ok);
        assert!(etp_report_passed(report));

        let mut res = f64::NAN;
        assert_eq!(etp_report_final_residual(report, &mut res), EtpStatus::Ok);
        assert!(res < 1e-8);
        let mut vt = 0;
        assert_eq!(etp_report_virtual_time(report, &mut vt), EtpStatus::Ok);
        assert!(vt > 0);
        let mut wall = 0.0;
        assert_eq!(etp_report_wall_time_ms(report, &mut wall), EtpStatus::NotApplicable);

        let mut needed = 0;
        assert_eq!(etp_report_solution(report, ptr::null_mut(), 0, &mut needed), EtpStatus::BufferTooSmall);
        assert_eq!(needed, 512);
        let mut buf = vec![0.0; needed];
        assert_eq!(etp_report_solution(report, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), EtpStatus::Ok);
        assert!(buf.iter().any(|&v| v != 0.0));

        let mut json = ptr::null_mut();
        assert_eq!(etp_report_to_json(report, &mut json), EtpStatus::Ok);
        let parsed: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(parsed["config"]["policy"]["kind"], "event-triggered");
        assert_eq!(parsed["solution"].as_array().unwrap().len(), 512);
        etp_string_free(json);

        etp_report_free(report);
        etp_config_free(cfg);
        etp_instance_free(inst);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(etp_instance_manufactured(2, 2, &mut inst), EtpStatus::InvalidInstance);
        assert!(inst.is_null());
        assert!(last_error().contains("too small"));

        assert_eq!(etp_instance_manufactured(8, 8, ptr::null_mut()), EtpStatus::NullArgument);

        let cfg = config(2);
        assert_eq!(etp_config_set_omega(cfg, 2.5), EtpStatus::InvalidArgument);
        assert_eq!(etp_config_set_event(cfg, 100.0, 1.5, 0), EtpStatus::InvalidArgument);
        assert!(last_error().contains("decay"));
        assert_eq!(etp_config_set_pes(cfg, 3), EtpStatus::Ok);

        let inst = manufactured(16, 8);
        let mut report = ptr::null_mut();
        assert_eq!(etp_run(inst, cfg, &mut report), EtpStatus::InvalidConfig);
        assert!(report.is_null());
        assert!(last_error().contains("3 PEs"));
        assert_eq!(etp_run(ptr::null(), cfg, &mut report), EtpStatus::NullArgument);

        let mut x = 0.0;
        assert_eq!(etp_report_final_residual(ptr::null(), &mut x), EtpStatus::NullArgument);
        assert!(!etp_report_passed(ptr::null()));
        assert_eq!(etp_instance_cells(ptr::null()), 0);

        etp_config_free(cfg);
        etp_instance_free(inst);
        etp_instance_free(ptr::null_mut());
        etp_report_free(ptr::null_mut());
        etp_string_free(ptr::null_mut());
    }
}

#[test]
fn json_round_trips() {
    unsafe {
        let bad = CString::new("{\"nx\": 1}").unwrap();
        let mut inst = ptr::null_mut();
        assert_eq!(etp_instance_from_json(bad.as_ptr(), &mut inst), EtpStatus::InvalidInstance);

        let mut cfg = ptr::null_mut();
        let json = CString::new(
            serde_json::to_string(&etpoisson::runner::RunConfig {
                n_pes: 2,
                policy: etpoisson::runner::PolicyKind::Synchronous,
                ..Default::default()
            })
            .unwrap(),
        )
        .unwrap();
        assert_eq!(etp_config_from_json(json.as_ptr(), &mut cfg), EtpStatus::Ok);

        let inst_json = {
            let mut out = Vec::new();
            etpoisson::problems::write_instance(&etpoisson::problems::manufactured_instance(16, 8).unwrap(), &mut out)
                .unwrap();
            CString::new(out).unwrap()
        };
        assert_eq!(etp_instance_from_json(inst_json.as_ptr(), &mut inst), EtpStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(etp_run(inst, cfg, &mut report), EtpStatus::Ok);
        assert!(etp_report_passed(report));
        etp_report_free(report);
        etp_config_free(cfg);
        etp_instance_free(inst);
    }
}

#[test]
fn threaded_backend_reports_wall_time() {
    let inst = manufactured(16, 8);
    let cfg = config(2);
    unsafe {
        assert_eq!(etp_config_set_backend(cfg, EtpBackend::Threads), EtpStatus::Ok);
        assert_eq!(etp_config_set_policy(cfg, EtpPolicy::Async), EtpStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(etp_run(inst, cfg, &mut report), EtpStatus::Ok);
        assert!(etp_report_passed(report));
        let (mut wall, mut vt) = (0.0, 0);
        assert_eq!(etp_report_wall_time_ms(report, &mut wall), EtpStatus::Ok);
        assert_eq!(etp_report_virtual_time(report, &mut vt), EtpStatus::NotApplicable);
        etp_report_free(report);
        etp_config_free(cfg);
        etp_instance_free(inst);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/etpoisson.h")).unwrap();
    for name in ["etp_run", "etp_last_error_message", "etp_report_solution", "ETP_STATUS_DIVERGED", "typedef struct EtpReport EtpReport"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Directory holding the library artifacts for this test build.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libetpoisson_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or no static library at {}", lib.display());
        return;
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("etp_solve_c");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("examples/solve.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "C program failed: {stdout} {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("passed=1"), "{stdout}");
}
