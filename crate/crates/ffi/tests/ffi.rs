use std::ffi::{c_char, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use wrmcu_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { wr_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn encode(order: &WrOrder) -> Vec<u8> {
    let mut buf = [0u8; 64];
    let mut len = 0;
    assert_eq!(
        unsafe { wr_encode_order(order, buf.as_mut_ptr(), buf.len(), &mut len) },
        WrStatus::Ok
    );
    buf[..len].to_vec()
}

#[test]
fn crc_of_stop_body() {
    let mut out = 0;
    assert_eq!(unsafe { wr_crc8([2u8, 0].as_ptr(), 2, &mut out) }, WrStatus::Ok);
    assert_eq!(out, 0x2A);
    assert_eq!(unsafe { wr_crc8(ptr::null(), 0, &mut out) }, WrStatus::Ok);
    assert_eq!(out, 0);
    assert_eq!(unsafe { wr_crc8(ptr::null(), 3, &mut out) }, WrStatus::NullPointer);
}

#[test]
fn stop_frame_bytes() {
    let stop = WrOrder {
        kind: WR_ORDER_STOP,
        ..WrOrder::default()
    };
    assert_eq!(encode(&stop), [0x7E, 0x02, 0x00, 0x2A]);
}

#[test]
fn encode_errors() {
    let mut len = 0;
    let mut buf = [0u8; 4];
    let big = WrOrder {
        kind: WR_ORDER_VELOCITY,
        wheels: [301.0, 0.0, 0.0, 0.0],
        steering: 0.0,
    };
    assert_eq!(
        unsafe { wr_encode_order(&big, buf.as_mut_ptr(), 4, &mut len) },
        WrStatus::Range
    );
    assert!(last_error().contains("wheel0"));
    let ok = WrOrder {
        kind: WR_ORDER_TENSION,
        wheels: [1.0; 4],
        steering: 0.0,
    };
    assert_eq!(
        unsafe { wr_encode_order(&ok, buf.as_mut_ptr(), 4, &mut len) },
        WrStatus::BufferTooSmall
    );
    assert_eq!(len, encode(&ok).len());
    let bad_kind = WrOrder {
        kind: 9,
        ..WrOrder::default()
    };
    assert_eq!(
        unsafe { wr_encode_order(&bad_kind, buf.as_mut_ptr(), 4, &mut len) },
        WrStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { wr_encode_order(ptr::null(), buf.as_mut_ptr(), 4, &mut len) },
        WrStatus::NullPointer
    );
}

#[test]
fn decoder_streams_frames() {
    let a = WrOrder {
        kind: WR_ORDER_CURRENT,
        wheels: [100.0, -200.0, 0.0, 5000.0],
        steering: 30.0,
    };
    let t = WrTelemetry {
        cycle: 9,
        velocity: [1.5, 2.5, -3.5, 0.0],
        current: [10.0, 0.0, -10.0, 3.0],
        position: -12.3,
        compute_us: 44,
        op_state: 127,
        mode: 1,
        fault: true,
    };
    let mut stream = vec![0x11, 0x22];
    stream.extend(encode(&a));
    let mut tbuf = [0u8; 64];
    let mut tlen = 0;
    assert_eq!(
        unsafe { wr_encode_telemetry(&t, tbuf.as_mut_ptr(), 64, &mut tlen) },
        WrStatus::Ok
    );
    stream.extend(&tbuf[..tlen]);
    stream.extend([0x7E, 0x02]);

    let dec = wr_decoder_new();
    let mut rest = &stream[..];
    let mut out = WrDecoded::default();
    let mut seen = Vec::new();
    loop {
        let mut used = 0;
        let status = unsafe { wr_decoder_feed(dec, rest.as_ptr(), rest.len(), &mut used, &mut out) };
        rest = &rest[used..];
        seen.push((status, out));
        if status == WrStatus::NeedMore {
            break;
        }
    }
    unsafe { wr_decoder_free(dec) };
    assert_eq!(seen.len(), 3);
    assert_eq!(
        (seen[0].0, seen[0].1.tag, seen[0].1.order),
        (WrStatus::Ok, WR_DECODED_ORDER, a)
    );
    assert_eq!(
        (seen[1].0, seen[1].1.tag, seen[1].1.telemetry),
        (WrStatus::Ok, WR_DECODED_TELEMETRY, t)
    );
    assert!(rest.is_empty());
}

#[test]
fn fsm_step_walks_to_reconnecting() {
    let mut s = WrFsmState {
        op_code: 0,
        mode: 0,
        n: 2,
        mode_count: 2,
    };
    let mut codes = Vec::new();
    let mut modes = Vec::new();
    for _ in 0..6 {
        let mut next = WrFsmState::default();
        let mut read = true;
        assert_eq!(unsafe { wr_fsm_step(&s, false, &mut next, &mut read) }, WrStatus::Ok);
        assert!(!read);
        s = next;
        codes.push(s.op_code);
        modes.push(s.mode);
    }
    assert_eq!(codes, [1, 2, 127, 127, 127, 127]);
    assert_eq!(modes, [0, 0, 0, 1, 0, 1]);
    let mut next = WrFsmState::default();
    let mut read = false;
    assert_eq!(unsafe { wr_fsm_step(&s, true, &mut next, &mut read) }, WrStatus::Ok);
    assert!(read && next.op_code == 0 && next.mode == s.mode);

    let bad = WrFsmState { op_code: 3, ..s };
    assert_eq!(
        unsafe { wr_fsm_step(&bad, true, &mut next, ptr::null_mut()) },
        WrStatus::InvalidArgument
    );
}

#[test]
fn simulation_runs_to_done() {
    let opts = WrSimOptions {
        scenario: 1,
        cycles: 80,
        threaded: true,
        wall_timing: true,
        rc_source: false,
        seed: 1,
    };
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { wr_simulation_new(&opts, ptr::null(), &mut sim) }, WrStatus::Ok);
    let mut m = WrCycleMetrics::default();
    let mut n = 0;
    while unsafe { wr_simulation_step(sim, &mut m) } == WrStatus::Ok {
        n += 1;
    }
    assert_eq!(n, 80);
    assert_eq!(unsafe { wr_simulation_step(sim, &mut m) }, WrStatus::Done);
    assert_eq!(m.cycle, 79);
    assert!((m.wheel_rpm[0] - 50.0).abs() <= 2.5);
    let mut s = WrSummary::default();
    assert_eq!(unsafe { wr_simulation_summary(sim, &mut s) }, WrStatus::Ok);
    assert_eq!(s.cycles, 80);
    assert!(s.max_ms >= s.avg_ms && s.max_ms < s.budget_ms);
    unsafe { wr_simulation_free(sim) };
}

#[test]
fn simulation_rejects_bad_input() {
    let mut sim = ptr::null_mut();
    let opts = WrSimOptions {
        scenario: 7,
        cycles: -1,
        ..WrSimOptions::default()
    };
    assert_eq!(
        unsafe { wr_simulation_new(&opts, ptr::null(), &mut sim) },
        WrStatus::InvalidArgument
    );
    assert!(sim.is_null());
    let opts = WrSimOptions { scenario: 2, ..opts };
    let cfg = CString::new("fsm.n=0\n").unwrap();
    assert_eq!(
        unsafe { wr_simulation_new(&opts, cfg.as_ptr(), &mut sim) },
        WrStatus::InvalidArgument
    );
    assert!(last_error().contains("fsm.n"), "{}", last_error());
    let cfg = CString::new("not a setting").unwrap();
    assert_eq!(
        unsafe { wr_simulation_new(&opts, cfg.as_ptr(), &mut sim) },
        WrStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { wr_simulation_step(ptr::null_mut(), ptr::null_mut()) },
        WrStatus::NullPointer
    );
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libwrmcu_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn header_compiles_and_links_from_c() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not found; skipping C link test");
        return;
    };
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping C link test");
        return;
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
