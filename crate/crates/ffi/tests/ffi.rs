use std::ptr;

use twinbeam_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::os::raw::c_char; 256];
    let n = unsafe { tb_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn bernoulli_matrix_entries() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tb_matrix_bernoulli(0.5, 2, &mut m) }, TbStatus::Ok);
    let (mut c, mut n) = (0, 0);
    assert_eq!(unsafe { tb_matrix_dims(m, &mut c, &mut n) }, TbStatus::Ok);
    assert_eq!((c, n), (2, 2));
    unsafe {
        assert!((tb_matrix_get(m, 1, 2) - 0.5).abs() < 1e-15);
        assert!((tb_matrix_get(m, 0, 2) - 0.25).abs() < 1e-15);
        assert_eq!(tb_matrix_get(m, 9, 9), 0.0);
        assert!(tb_matrix_max_column_defect(m) < 1e-15);
        tb_matrix_free(m);
    }
}

#[test]
fn invalid_parameter_sets_message() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tb_matrix_bernoulli(1.5, 2, &mut m) }, TbStatus::InvalidParameter);
    assert!(m.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(unsafe { tb_matrix_bernoulli(0.5, 2, ptr::null_mut()) }, TbStatus::NullPointer);
    assert_eq!(unsafe { tb_matrix_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, TbStatus::NullPointer);
    assert!(last_error().contains("null"));
    unsafe {
        tb_matrix_free(ptr::null_mut());
        tb_joint_free(ptr::null_mut());
        assert_eq!(tb_joint_get(ptr::null(), 0, 0), 0.0);
    }
}

#[test]
fn truncated_error_buffer_is_terminated() {
    let mut m = ptr::null_mut();
    unsafe { tb_matrix_bernoulli(-1.0, 2, &mut m) };
    let mut buf = [1 as std::os::raw::c_char; 4];
    let full = unsafe { tb_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(full > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn finite_matches_composed_thinning() {
    let (mut a, mut b, mut t, mut ab) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(tb_matrix_finite(4, 0.3, 0.0, 6, 0, &mut a), TbStatus::Ok);
        assert_eq!(tb_matrix_finite(4, 0.6, 0.0, 6, 0, &mut b), TbStatus::Ok);
        assert_eq!(tb_matrix_bernoulli(0.5, 6, &mut t), TbStatus::Ok);
        assert_eq!(tb_matrix_compose(b, t, &mut ab), TbStatus::Ok);
        for c in 0..=4 {
            for n in 0..=6 {
                assert!((tb_matrix_get(a, c, n) - tb_matrix_get(ab, c, n)).abs() < 1e-10);
            }
        }
        for m in [a, b, t, ab] {
            tb_matrix_free(m);
        }
    }
}

#[test]
fn joint_roundtrip_and_forward() {
    let vals = [0.2, 0.0, 0.0, 0.8];
    let mut p = ptr::null_mut();
    let mut g = ptr::null_mut();
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(tb_joint_new(vals.as_ptr(), 2, 2, false, &mut p), TbStatus::Ok);
        let (mut r, mut c) = (0, 0);
        tb_joint_dims(p, &mut r, &mut c);
        assert_eq!((r, c), (2, 2));
        assert_eq!(tb_joint_get(p, 1, 1), 0.8);
        assert_eq!(tb_matrix_bernoulli(0.5, 1, &mut g), TbStatus::Ok);
        assert_eq!(tb_forward(p, g, g, &mut f), TbStatus::Ok);
        // 0.8 * 0.25 for both photons detected
        assert!((tb_joint_get(f, 1, 1) - 0.2).abs() < 1e-15);
        assert!((tb_joint_get(f, 0, 0) - (0.2 + 0.2)).abs() < 1e-15);
        tb_joint_free(f);
        tb_joint_free(p);
        tb_matrix_free(g);
    }
}

#[test]
fn joint_rejects_negative_entries() {
    let vals = [0.5, -0.5, 0.5, 0.5];
    let mut p = ptr::null_mut();
    assert_ne!(unsafe { tb_joint_new(vals.as_ptr(), 2, 2, false, &mut p) }, TbStatus::Ok);
    assert!(p.is_null());
    assert_eq!(unsafe { tb_joint_new(ptr::null(), 2, 2, false, &mut p) }, TbStatus::NullPointer);
}

#[test]
fn stats_of_correlated_pair() {
    let vals = [0.5, 0.0, 0.0, 0.5];
    let mut p = ptr::null_mut();
    let mut s = TbStats::default();
    unsafe {
        tb_joint_new(vals.as_ptr(), 2, 2, false, &mut p);
        assert_eq!(tb_joint_stats(p, &mut s), TbStatus::Ok);
        tb_joint_free(p);
    }
    assert!((s.mean_s - 0.5).abs() < 1e-15);
    assert!((s.fano_s - 0.5).abs() < 1e-15);
    assert!((s.correlation - 1.0).abs() < 1e-12);
    assert!(s.noise_reduction.abs() < 1e-12);
}

#[test]
fn reconstruct_identity() {
    let vals = [0.1, 0.2, 0.3, 0.4];
    let (mut f, mut g, mut r) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    let mut iters = 0;
    unsafe {
        tb_joint_new(vals.as_ptr(), 2, 2, true, &mut f);
        tb_matrix_bernoulli(1.0, 1, &mut g);
        assert_eq!(tb_reconstruct(f, g, g, 1, 1, 100, &mut r, &mut iters), TbStatus::Ok);
        assert!(iters >= 1);
        for (k, v) in vals.iter().enumerate() {
            assert!((tb_joint_get(r, k / 2, k % 2) - v).abs() < 1e-12);
        }
        tb_joint_free(r);
        tb_joint_free(f);
        tb_matrix_free(g);
    }
}

#[test]
fn model_distribution_is_normalized() {
    let params = TbFitParams {
        m_p: 10.0,
        b_p: 0.5,
        m_s: 1.0,
        b_s: 0.2,
        m_i: 1.0,
        b_i: 0.2,
        tau_s: 1.0,
        tau_i: 1.0,
        d_s: 0.0,
        d_i: 0.0,
    };
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(tb_model_distribution(&params, 60, 60, &mut p), TbStatus::Ok);
        let mut total = 0.0;
        for s in 0..=60 {
            for i in 0..=60 {
                total += tb_joint_get(p, s, i);
            }
        }
        assert!((total - 1.0).abs() < 1e-9);
        tb_joint_free(p);
    }
}

#[test]
fn simulate_is_seeded() {
    let vals = [0.0, 0.0, 0.0, 1.0];
    let arm = TbArm { transmissivity: 1.0, pixels: 4, efficiency: 0.5, dark_prob: 0.0 };
    let (mut p, mut a, mut b) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        tb_joint_new(vals.as_ptr(), 2, 2, false, &mut p);
        assert_eq!(tb_simulate(p, &arm, &arm, 20000, 3, &mut a), TbStatus::Ok);
        assert_eq!(tb_simulate(p, &arm, &arm, 20000, 3, &mut b), TbStatus::Ok);
        for s in 0..2 {
            for i in 0..2 {
                assert_eq!(tb_joint_get(a, s, i), tb_joint_get(b, s, i));
            }
        }
        assert!((tb_joint_get(a, 1, 1) - 0.25).abs() < 0.02);
        for h in [p, a, b] {
            tb_joint_free(h);
        }
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/twinbeam.h")).unwrap();
    for name in [
        "tb_last_error_message",
        "tb_matrix_bernoulli",
        "tb_matrix_infinite",
        "tb_matrix_finite",
        "tb_matrix_compose",
        "tb_matrix_dims",
        "tb_matrix_get",
        "tb_matrix_max_column_defect",
        "tb_matrix_free",
        "tb_joint_new",
        "tb_joint_dims",
        "tb_joint_get",
        "tb_joint_stats",
        "tb_joint_free",
        "tb_forward",
        "tb_reconstruct",
        "tb_model_distribution",
        "tb_simulate",
        "TbStatus_Ok = 0",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
