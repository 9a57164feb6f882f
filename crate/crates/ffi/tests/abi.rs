use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use greedy_sched_ffi::*;

fn ring(n: usize) -> *mut GsGraph {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { gs_graph_ring(n, &mut g) }, GsStatus::Ok);
    g
}

fn last_error() -> String {
    let p = gs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn graph_lifecycle() {
    let g = ring(6);
    assert_eq!(unsafe { gs_graph_link_count(g) }, 6);
    unsafe { gs_graph_free(g) };
    unsafe { gs_graph_free(ptr::null_mut()) };
    assert_eq!(unsafe { gs_graph_link_count(ptr::null()) }, 0);

    let edges = [1u32, 2, 2, 3];
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { gs_graph_new(3, edges.as_ptr(), 2, &mut g) }, GsStatus::Ok);
    assert_eq!(unsafe { gs_graph_link_count(g) }, 3);
    unsafe { gs_graph_free(g) };

    let spec = CString::new("bipartite8").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { gs_graph_from_spec(spec.as_ptr(), &mut g) }, GsStatus::Ok);
    assert_eq!(unsafe { gs_graph_link_count(g) }, 8);
    unsafe { gs_graph_free(g) };
}

#[test]
fn errors_are_reported() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { gs_graph_ring(2, &mut g) }, GsStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(last_error().contains("at least 3"));

    let edges = [1u32, 1];
    assert_eq!(unsafe { gs_graph_new(3, edges.as_ptr(), 1, &mut g) }, GsStatus::InvalidArgument);
    assert_eq!(unsafe { gs_graph_ring(6, ptr::null_mut()) }, GsStatus::NullPointer);

    let bad = CString::new("ring:x").unwrap();
    assert_eq!(unsafe { gs_graph_from_spec(bad.as_ptr(), &mut g) }, GsStatus::Parse);

    let g = ring(6);
    let mut out = 0.0;
    let a = [0.1; 5];
    let p = [1u32, 2, 3, 4, 5, 6];
    assert_eq!(
        unsafe { gs_weighted_norm(g, p.as_ptr(), a.as_ptr(), 5, &mut out) },
        GsStatus::InvalidArgument
    );
    let a = [0.51; 6];
    let mut x = [0.0; 6];
    let (mut p1, mut p2) = ([0u32; 6], [0u32; 6]);
    let mut t = 0.0;
    let status = unsafe {
        gs_em_assign(g, a.as_ptr(), 6, 1, 0, x.as_mut_ptr(), p1.as_mut_ptr(), p2.as_mut_ptr(), &mut t)
    };
    assert_eq!(status, GsStatus::Ok);
    assert!(t > 1.0);

    // A successful call clears the message.
    assert_eq!(unsafe { gs_weighted_norm(g, p.as_ptr(), a.as_ptr(), 6, &mut out) }, GsStatus::Ok);
    assert!(gs_last_error().is_null());
    unsafe { gs_graph_free(g) };
}

#[test]
fn region_queries() {
    let g = ring(6);
    let a = [0.3, 0.4, 0.3, 0.4, 0.3, 0.4];
    let p = [1u32, 2, 3, 4, 5, 6];
    let mut norm = 0.0;
    assert_eq!(unsafe { gs_weighted_norm(g, p.as_ptr(), a.as_ptr(), 6, &mut norm) }, GsStatus::Ok);
    assert!((norm - 1.0).abs() < 1e-12);

    let mut v = GsVerdict::default();
    let mut cert = [0u32; 6];
    assert_eq!(
        unsafe { gs_test_feasibility(g, a.as_ptr(), 6, &mut v, cert.as_mut_ptr()) },
        GsStatus::Ok
    );
    assert!(v.member);
    let mut check = 0.0;
    unsafe { gs_weighted_norm(g, cert.as_ptr(), a.as_ptr(), 6, &mut check) };
    assert!((check - v.value).abs() < 1e-12);

    let mut best = [0u32; 6];
    let mut best_norm = 0.0;
    assert_eq!(
        unsafe { gs_min_norm_priority(g, a.as_ptr(), 6, best.as_mut_ptr(), &mut best_norm) },
        GsStatus::Ok
    );
    assert!((best_norm - v.value).abs() < 1e-12);

    let a = [0.34; 6];
    assert_eq!(unsafe { gs_test_feasibility(g, a.as_ptr(), 6, &mut v, ptr::null_mut()) }, GsStatus::Ok);
    assert!(!v.member);
    unsafe { gs_graph_free(g) };
}

#[test]
fn schedules() {
    let g = ring(6);
    let p = [1u32, 2, 3, 4, 5, 6];
    let mut s = 0;
    assert_eq!(unsafe { gs_greedy_schedule(g, p.as_ptr(), 6, 0b111111, &mut s) }, GsStatus::Ok);
    assert_eq!(s, 0b010101);
    assert_eq!(unsafe { gs_greedy_schedule(g, p.as_ptr(), 6, 0b000110, &mut s) }, GsStatus::Ok);
    assert_eq!(s, 0b000010);

    let q = [0u64, 5, 0, 5, 0, 5];
    assert_eq!(unsafe { gs_max_weight_schedule(g, q.as_ptr(), 6, &mut s) }, GsStatus::Ok);
    assert_eq!(s, 0b101010);
    unsafe { gs_graph_free(g) };
}

#[test]
fn simulation_result() {
    let cfg = CString::new(
        r#"{"graph":"ring:6","scheduler":"maxweight","arrivals":"bernoulli:0.3","horizon":2000,"seed":7}"#,
    )
    .unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gs_simulate(cfg.as_ptr(), &mut r) }, GsStatus::Ok);
    let mut q = [u64::MAX; 6];
    assert_eq!(unsafe { gs_sim_result_final_queues(r, q.as_mut_ptr(), 6) }, GsStatus::Ok);
    assert_eq!(q.iter().copied().max().unwrap(), unsafe { gs_sim_result_final_max_queue(r) });
    assert!(unsafe { gs_sim_result_slope(r) }.abs() < 0.05);
    assert_eq!(
        unsafe { gs_sim_result_final_queues(r, q.as_mut_ptr(), 3) },
        GsStatus::BufferTooSmall
    );
    unsafe { gs_sim_result_free(r) };

    let bad = CString::new(r#"{"graph":"ring:6","bogus":1}"#).unwrap();
    assert_eq!(unsafe { gs_simulate(bad.as_ptr(), &mut r) }, GsStatus::Parse);
}

// Compiles a C program against the generated header and links the static library.
#[test]
fn c_program_links() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libgreedy_sched_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler not available");
        return;
    }
    let out = std::env::temp_dir().join(format!("gs_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "norm=1.000000");
}
