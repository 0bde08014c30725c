//! Orchestration, relative errors, emission and configuration files.

use dimerwork::config;
use dimerwork::emit::{parse_csv, render, round_sig12, to_csv, to_json, CSV_HEADER};
use dimerwork::{
    adiabaticity_diagnostic, relative_error_grid, run_single, run_sweep, Axis, Cell, CellStatus,
    DimerConfig, Error, Flags, OutputFormat, Protocol, Quantity, SweepSpec, SweepTable,
};

fn spec(protocol: Protocol, u: Axis, tau: Axis) -> SweepSpec {
    SweepSpec {
        u_over_j: u,
        tau_j: tau,
        protocol,
        ..Default::default()
    }
}

#[test]
fn exact_and_bare_agree_without_interaction() {
    let cfg = DimerConfig::with_u_tau(0.0, 1.0);
    let e = run_single(&cfg, Protocol::Exact, Flags::NONE).unwrap();
    let n = run_single(&cfg, Protocol::Ni, Flags::NONE).unwrap();
    assert!((e.extracted_work - n.extracted_work).abs() < 1e-9);
}

#[test]
fn invalid_flag_combinations_are_rejected_with_cell_coordinates() {
    let cfg = DimerConfig::with_u_tau(2.0, 1.0);
    let err = run_single(
        &cfg,
        Protocol::Ni,
        Flags {
            fop: false,
            tpf: true,
        },
    )
    .unwrap_err();
    match err {
        Error::Cell {
            u_over_j, tau_j, ..
        } => assert_eq!((u_over_j, tau_j), (2.0, 1.0)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn single_cell_sweep_matches_single_run() {
    let s = spec(Protocol::KsPar, Axis::single(3.0), Axis::single(2.0));
    let t = run_sweep(&s).unwrap();
    let r = run_single(
        &DimerConfig::with_u_tau(3.0, 2.0),
        Protocol::KsPar,
        Flags::NONE,
    )
    .unwrap();
    assert_eq!(t.cells.len(), 1);
    assert_eq!(t.cells[0].extracted_work, r.extracted_work);
    assert_eq!(t.cells[0].entropy_production, r.entropy_production);
}

#[test]
fn relative_error_of_exact_against_itself_is_zero() {
    let s = spec(
        Protocol::Exact,
        Axis::new(0.0, 8.0, 5).unwrap(),
        Axis::new(0.5, 3.0, 4).unwrap(),
    );
    let t = run_sweep(&s).unwrap();
    let rel = relative_error_grid(&t, &t).unwrap();
    for c in &rel.cells {
        match c.status {
            CellStatus::Ok => assert_eq!(c.relative_error, Some(0.0)),
            CellStatus::Guarded => assert!(c.relative_error.unwrap().is_nan()),
            _ => panic!("unexpected failure"),
        }
    }
}

#[test]
fn relative_error_needs_matching_axes() {
    let a = run_sweep(&spec(
        Protocol::Exact,
        Axis::new(0.0, 1.0, 2).unwrap(),
        Axis::single(1.0),
    ))
    .unwrap();
    let b = run_sweep(&spec(
        Protocol::Ni,
        Axis::new(0.0, 2.0, 2).unwrap(),
        Axis::single(1.0),
    ))
    .unwrap();
    assert!(matches!(
        relative_error_grid(&a, &b),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn near_zero_exact_work_is_guarded() {
    let mut exact = run_sweep(&spec(
        Protocol::Exact,
        Axis::single(10.0),
        Axis::single(5.0),
    ))
    .unwrap();
    exact.cells[0].extracted_work = 1e-9;
    let approx = run_sweep(&spec(Protocol::Ni, Axis::single(10.0), Axis::single(5.0))).unwrap();
    let rel = relative_error_grid(&exact, &approx).unwrap();
    assert_eq!(rel.cells[0].status, CellStatus::Guarded);
    assert!(rel.cells[0].relative_error.unwrap().is_nan());
    assert_eq!(rel.guarded_count(), 1);
    assert!(to_csv(&rel, Quantity::RelativeError, None)
        .contains("# flagged = 10.0000000000,5.00000000000,guarded"));
}

#[test]
fn bare_work_is_constant_along_interaction_axis() {
    let t = run_sweep(&spec(
        Protocol::Ni,
        Axis::new(0.0, 10.0, 6).unwrap(),
        Axis::new(0.0, 4.0, 5).unwrap(),
    ))
    .unwrap();
    for it in 0..5 {
        let first = t.cell(0, it).extracted_work;
        for iu in 1..6 {
            assert_eq!(t.cell(iu, it).extracted_work.to_bits(), first.to_bits());
        }
    }
}

#[test]
fn adiabaticity_limits() {
    let quench = adiabaticity_diagnostic(&DimerConfig::with_u_tau(5.0, 0.0)).unwrap();
    assert!(quench > 0.1, "sudden quench diagnostic {quench}");
    let still = DimerConfig {
        delta_tau: 0.5,
        ..DimerConfig::with_u_tau(5.0, 3.0)
    };
    assert!(adiabaticity_diagnostic(&still).unwrap() < 1e-10);
}

#[test]
fn adiabaticity_decreases_with_ramp_time() {
    let values: Vec<f64> = (0..20)
        .map(|k| 0.5 + 4.5 * k as f64 / 19.0)
        .map(|tau| adiabaticity_diagnostic(&DimerConfig::with_u_tau(5.0, tau)).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
}

fn zero_table() -> SweepTable {
    SweepTable {
        spec: spec(Protocol::Exact, Axis::single(0.0), Axis::single(0.0)),
        cells: vec![Cell {
            extracted_work: 0.0,
            entropy_production: 0.0,
            jarzynski_residual: 0.0,
            adiabaticity: None,
            relative_error: None,
            status: CellStatus::Ok,
        }],
    }
}

#[test]
fn zero_cell_csv_line() {
    let csv = to_csv(&zero_table(), Quantity::ExtractedWork, None);
    let mut body = csv.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(body.next(), Some(CSV_HEADER));
    assert_eq!(
        body.next(),
        Some("0.000000000000,0.000000000000,0.000000000000")
    );
    assert_eq!(body.next(), None);
}

#[test]
fn csv_round_trips_at_twelve_digits() {
    let t = run_sweep(&spec(
        Protocol::KsPlda,
        Axis::new(0.0, 10.0, 4).unwrap(),
        Axis::new(0.0, 5.0, 3).unwrap(),
    ))
    .unwrap();
    for q in [
        Quantity::ExtractedWork,
        Quantity::EntropyProduction,
        Quantity::JarzynskiResidual,
    ] {
        let parsed = parse_csv(&to_csv(&t, q, Some("1"))).unwrap();
        assert_eq!(parsed.rows.len(), 12);
        for ((u, tau, v), (u0, t0, c)) in parsed.rows.iter().zip(t.rows()) {
            assert_eq!(*u, round_sig12(u0));
            assert_eq!(*tau, round_sig12(t0));
            assert_eq!(v.to_bits(), round_sig12(c.value(q)).to_bits());
        }
        assert!(parsed
            .metadata
            .iter()
            .any(|(k, v)| k == "generated_at" && v == "1"));
    }
}

#[test]
fn json_mirrors_grid() {
    let t = run_sweep(&spec(
        Protocol::Exact,
        Axis::new(0.0, 2.0, 3).unwrap(),
        Axis::new(1.0, 2.0, 2).unwrap(),
    ))
    .unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&to_json(&t, Quantity::ExtractedWork, None)).unwrap();
    let values = v["values"].as_array().unwrap();
    assert_eq!(values.len(), 6);
    assert_eq!(v["metadata"]["protocol"], "exact");
    for (k, (_, _, c)) in t.rows().enumerate() {
        assert!(
            (values[k].as_f64().unwrap() - c.extracted_work).abs()
                <= 1e-11 * c.extracted_work.abs().max(1.0)
        );
    }
}

#[test]
fn output_is_deterministic_and_order_independent() {
    let s = spec(
        Protocol::KsPar,
        Axis::new(0.0, 6.0, 4).unwrap(),
        Axis::new(0.5, 3.0, 3).unwrap(),
    );
    let a = render(
        &run_sweep(&s).unwrap(),
        Quantity::ExtractedWork,
        OutputFormat::Csv,
        None,
    );
    let b = render(
        &run_sweep(&s).unwrap(),
        Quantity::ExtractedWork,
        OutputFormat::Csv,
        None,
    );
    assert_eq!(a, b);

    // cells computed one by one in reverse order and placed by coordinates
    let us = s.u_over_j.values();
    let ts = s.tau_j.values();
    let mut cells = vec![None; us.len() * ts.len()];
    for i in (0..cells.len()).rev() {
        let single = spec(
            s.protocol,
            Axis::single(us[i % us.len()]),
            Axis::single(ts[i / us.len()]),
        );
        cells[i] = Some(run_sweep(&single).unwrap().cells.remove(0));
    }
    let assembled = SweepTable {
        spec: s,
        cells: cells.into_iter().map(Option::unwrap).collect(),
    };
    assert_eq!(
        render(&assembled, Quantity::ExtractedWork, OutputFormat::Csv, None),
        a
    );
    let json = |t: &SweepTable| render(t, Quantity::ExtractedWork, OutputFormat::Json, None);
    assert_eq!(json(&assembled), json(&run_sweep(&s).unwrap()));
}

#[test]
fn full_exact_grid_has_every_row_and_repeats() {
    let s = SweepSpec::default();
    let first = to_csv(&run_sweep(&s).unwrap(), Quantity::ExtractedWork, None);
    let body = first
        .lines()
        .skip_while(|l| l.starts_with('#'))
        .skip(1)
        .count();
    assert_eq!(body, 51 * 51);
    assert_eq!(
        first,
        to_csv(&run_sweep(&s).unwrap(), Quantity::ExtractedWork, None)
    );
}

#[test]
fn unwritable_path_is_an_io_error() {
    let err = dimerwork::emit::emit(
        &zero_table(),
        Quantity::ExtractedWork,
        OutputFormat::Csv,
        std::path::Path::new("/nonexistent-dir/out.csv"),
        None,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.code(), "io");
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(
        &path,
        "# tpf cut\nprotocol = ks-plda\ntpf = true\nu_min = 1\nu_max = 3\nu_count = 3\ntau_max = 4\nbeta = 1.5\n",
    )
    .unwrap();
    let mut s = SweepSpec::default();
    config::load(&path, &mut s).unwrap();
    assert_eq!(s.protocol, Protocol::KsPlda);
    assert!(s.flags.tpf);
    assert_eq!(s.u_over_j.values(), vec![1.0, 2.0, 3.0]);
    assert_eq!(s.tau_j.max, 4.0);
    assert_eq!(s.base.beta, 1.5);
    let missing = config::load(&dir.path().join("absent.conf"), &mut s).unwrap_err();
    assert_eq!(missing.code(), "io");
}
