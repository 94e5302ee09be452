use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use nonstgm_ffi::*;

fn last_error() -> String {
    let p = nsg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(nsg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn builtin_model_true_graph() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(nsg_model_builtin(NsgBuiltin::Small, &mut m), NsgStatus::Ok);
        assert_eq!(nsg_model_dim(m), 4);
        let mut g = ptr::null_mut();
        assert_eq!(nsg_true_graph(m, &mut g), NsgStatus::Ok);
        assert_eq!(nsg_graph_dim(g), 4);
        assert_eq!(nsg_graph_is_nonstationary(g, 0), 1);
        assert_eq!(nsg_graph_is_nonstationary(g, 1), 0);
        assert_eq!(nsg_graph_is_nonstationary(g, 4), -1);
        assert_eq!(nsg_graph_edge(g, 0, 1), NsgEdge::TimeInvariant);
        assert_eq!(nsg_graph_edge(g, 1, 0), NsgEdge::TimeInvariant);
        assert_eq!(nsg_graph_edge(g, 2, 3), NsgEdge::None);
        assert_eq!(nsg_graph_edge(g, 0, 9), NsgEdge::Invalid);
        nsg_graph_free(g);
        nsg_model_free(m);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = CString::new("p = 2\nd = 1\nsigma = [[1.0, 2.0], [2.0, 1.0]]\n").unwrap();
        assert_eq!(nsg_model_from_toml(bad.as_ptr(), &mut m), NsgStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("positive definite"));

        let explosive =
            CString::new("p = 1\nd = 1\n[[entry]]\nlag = 1\nrow = 1\ncol = 1\nkind = \"constant\"\nvalue = 1.5\n")
                .unwrap();
        assert_eq!(nsg_model_from_toml(explosive.as_ptr(), &mut m), NsgStatus::Ok);
        let mut p = ptr::null_mut();
        assert_eq!(nsg_simulate(m, 10, 0, 1, &mut p), NsgStatus::Numeric);
        assert!(p.is_null());
        assert!(last_error().contains("unstable"));
        nsg_model_free(m);

        assert_eq!(nsg_model_from_toml(ptr::null(), &mut m), NsgStatus::NullPointer);
        assert_eq!(
            nsg_model_builtin(NsgBuiltin::Small, ptr::null_mut()),
            NsgStatus::NullPointer
        );
        assert_eq!(nsg_simulate(ptr::null(), 10, 0, 1, &mut p), NsgStatus::NullPointer);
        assert_eq!(nsg_panel_n(ptr::null()), 0);
        nsg_model_free(ptr::null_mut());
        nsg_panel_free(ptr::null_mut());
        nsg_weights_free(ptr::null_mut());
        nsg_graph_free(ptr::null_mut());
    }
}

#[test]
fn panel_round_trip() {
    unsafe {
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let mut p = ptr::null_mut();
        assert_eq!(nsg_panel_from_data(data.as_ptr(), 4, 3, &mut p), NsgStatus::Ok);
        assert_eq!((nsg_panel_n(p), nsg_panel_p(p)), (4, 3));
        let mut back = vec![0.0; 12];
        assert_eq!(nsg_panel_copy_data(p, back.as_mut_ptr(), 12), NsgStatus::Ok);
        assert_eq!(back, data);
        assert_eq!(
            nsg_panel_copy_data(p, back.as_mut_ptr(), 11),
            NsgStatus::InvalidArgument
        );
        nsg_panel_free(p);
    }
}

#[test]
fn simulate_estimate_select() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(nsg_model_builtin(NsgBuiltin::Small, &mut m), NsgStatus::Ok);
        let (mut p1, mut p2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(nsg_simulate(m, 256, 100, 5, &mut p1), NsgStatus::Ok);
        assert_eq!(nsg_simulate(m, 256, 100, 5, &mut p2), NsgStatus::Ok);
        let (mut a, mut b) = (vec![0.0; 1024], vec![0.0; 1024]);
        nsg_panel_copy_data(p1, a.as_mut_ptr(), 1024);
        nsg_panel_copy_data(p2, b.as_mut_ptr(), 1024);
        assert_eq!(a, b);

        let mut opts = nsg_estimation_options_default();
        assert_eq!((opts.window, opts.nu, opts.folds), (0, 1, 5));
        opts.stride = 32;
        opts.grid_len = 12;
        opts.grid_ratio = 0.01;
        let mut w = ptr::null_mut();
        assert_eq!(nsg_estimate(p1, &opts, &mut w), NsgStatus::Ok, "{}", last_error());
        assert_eq!(nsg_weights_dim(w), 4);
        let (mut ws, mut wo) = (vec![-1.0; 16], vec![-1.0; 16]);
        assert_eq!(nsg_weights_copy(w, ws.as_mut_ptr(), wo.as_mut_ptr(), 16), NsgStatus::Ok);
        assert!(ws.iter().chain(&wo).all(|v| *v >= 0.0));
        assert!((0..4).all(|a| ws[a * 5] == 0.0));
        assert_eq!(nsg_weights_copy(w, ptr::null_mut(), wo.as_mut_ptr(), 16), NsgStatus::Ok);

        let mut g = ptr::null_mut();
        assert_eq!(nsg_select_graph(w, NsgRule::And, -1.0, -1.0, &mut g), NsgStatus::Ok);
        assert_eq!(nsg_graph_dim(g), 4);
        nsg_graph_free(g);
        assert_eq!(
            nsg_select_graph(w, NsgRule::Or, f64::NAN, 0.0, &mut g),
            NsgStatus::InvalidArgument
        );
        assert!(g.is_null());

        nsg_weights_free(w);
        opts.folds = 0;
        assert_eq!(nsg_estimate(p1, &opts, &mut w), NsgStatus::InvalidArgument);
        assert!(w.is_null());

        nsg_panel_free(p1);
        nsg_panel_free(p2);
        nsg_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("nonstgm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "nsg_estimate",
        "nsg_select_graph",
        "nsg_last_error_message",
        "NSG_STATUS_PANIC",
    ] {
        assert!(text.contains(f), "{f}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ NsgModel *m = 0; return nsg_model_builtin(NSG_BUILTIN_SMALL, &m) == NSG_STATUS_OK ? 0 : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .status()
    {
        Ok(s) => assert!(s.success()),
        Err(_) => eprintln!("no C compiler; header syntax not checked"),
    }
}
