use tristirap::dressed::{dark_state, dressed_frame, exact_alpha, Mode};
use tristirap::model::AtomParams;
use tristirap::presets;
use tristirap::pulse::Direction;
use tristirap::qcore::{expectation, DensityMatrix, Level};
use tristirap::scenarios::{
    run_full_transfer, run_full_transfer_from, run_optical_pumping_prep, run_partial_stirap, run_reverse_transfer,
    run_reverse_transfer_from, run_scan, DetuningR, Preset, ScanParameter, ScenarioParams, ScenarioSpec,
};
use tristirap::MHZ;

fn fig8() -> ScenarioParams {
    presets::load("fig8").unwrap().unwrap().base().spec.params.clone()
}

#[test]
fn no_stokes_coupling_means_no_transfer() {
    let p = ScenarioParams { omega_b0: 0.0, ..ScenarioParams::fig3() };
    let run = run_full_transfer(&p).unwrap();
    // R alone pumps D through P into S, where it stays; nothing reaches Q
    assert!(run.p_q_final < 1e-2, "P_Q = {}", run.p_q_final);
    let pops = run.series.final_state.populations();
    assert!(pops[Level::S.index()] + pops[Level::D.index()] > 0.99, "{pops:?}");
}

#[test]
fn broken_resonance_spoils_transfer() {
    let base = ScenarioParams::fig3();
    let dr = base.resolved_delta_r().unwrap();
    let p = ScenarioParams { delta_r: DetuningR::Fixed(dr + 10.0 * MHZ), ..base };
    let run = run_full_transfer(&p).unwrap();
    assert!(run.p_q_final < 0.5, "P_Q = {}", run.p_q_final);
}

#[test]
fn sudden_switch_on_projects_onto_dressed_state() {
    let base = presets::load("reverse").unwrap().unwrap().base().spec.params.clone();
    let p = ScenarioParams { prep_ramp: 1e-4, ..base };
    let run = run_reverse_transfer(&p).unwrap();
    let alpha = exact_alpha(p.alpha_c().unwrap());
    let sudden = 1.0 / (1.0 + alpha * alpha);
    assert!((run.prep_fidelity_to_qs - sudden).abs() < 1e-6, "{} vs {sudden}", run.prep_fidelity_to_qs);
    assert!(sudden < 1.0 - 1e-3);
}

#[test]
fn freeze_at_window_end_is_plain_stirap() {
    let p = ScenarioParams::fig3();
    let (_, end) = p.schedule(Direction::DToQ, false, false).unwrap().window();
    let partial = run_partial_stirap(&p, Some(end)).unwrap();
    let full = run_full_transfer(&p).unwrap();
    let at_end = full.series.times.iter().position(|&t| t == full.stirap_end).expect("sample at switch-off");
    let diff = partial.series.final_state.max_abs_diff(&full.series.states[at_end]);
    assert!(diff < 1e-9, "state difference {diff:e}");
    assert!(partial.final_fidelity > 1.0 - 2e-4);
}

#[test]
fn freeze_where_the_pulses_cross_sets_mixing_ratio_to_beta() {
    let p = fig8();
    let sched = p.schedule(Direction::DToQ, false, false).unwrap();
    let model = p.model(&sched.envelopes).unwrap();
    let gap = |t: f64| {
        let [b, r, _] = model.rabi_at(t);
        b - r
    };
    // B leads; it falls below R after the R pulse peaks
    let (mut lo, mut hi) = (sched.r_center(), sched.window().1);
    assert!(gap(lo) > 0.0 && gap(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_cross = 0.5 * (lo + hi);
    let [b, r, _] = model.rabi_at(t_cross);
    let frame = dressed_frame(p.alpha_c().unwrap(), p.delta_c, Mode::Exact);
    let dark = dark_state(&frame, b, r).unwrap();
    assert!((dark.mixing_ratio - frame.beta).abs() < 1e-9 * frame.beta);

    let run = run_partial_stirap(&p, Some(t_cross)).unwrap();
    assert!(run.final_fidelity > 1.0 - 1e-4, "final 1-F = {:e}", 1.0 - run.final_fidelity);
    let rho = &run.series.final_state;
    let amp_d = dark.vector.amplitude(Level::D).norm_sqr();
    assert!((rho.population(Level::D) - amp_d).abs() < 1e-3, "{} vs {amp_d}", rho.population(Level::D));
    let amp_q = dark.vector.amplitude(Level::Q).norm_sqr();
    assert!((rho.population(Level::Q) - amp_q).abs() < 1e-3);
    assert!(amp_d > 0.2 && amp_q > 0.2);
}

#[test]
fn scan_is_independent_of_worker_count() {
    let spec = ScenarioSpec::new(Preset::ScanTau, ScenarioParams::fig3())
        .with_scan(ScanParameter::TauEqualsDelay, vec![4.0, 5.0, 6.0]);
    let one = run_scan(&spec, 1).unwrap();
    let three = run_scan(&spec, 3).unwrap();
    assert_eq!(one.axis(), vec![4.0, 5.0, 6.0]);
    for (a, b) in one.points.iter().zip(&three.points) {
        assert_eq!(a.axis_value, b.axis_value);
        assert_eq!(a.one_minus_f.to_bits(), b.one_minus_f.to_bits());
        assert_eq!(a.p_q.to_bits(), b.p_q.to_bits());
    }
}

fn round_trip() -> (f64, f64, f64) {
    let p = ScenarioParams::fig3();
    let forward = run_full_transfer(&p).unwrap();
    let reverse = run_reverse_transfer(&p).unwrap();
    let round = run_reverse_transfer_from(&p, &forward.series.final_state).unwrap();
    (1.0 - forward.p_q_final, 1.0 - reverse.final_rho_dd, 1.0 - round.final_rho_dd)
}

#[test]
fn round_trip_stays_within_two_leg_budget() {
    let (fwd, rev, round) = round_trip();
    assert!(round <= 2.0 * (fwd + rev), "round trip 1-rho_DD = {round:e}, legs {fwd:e} + {rev:e}");
    assert!(round >= 0.0);
}

/// Single-pass budget applied to both legs; the Q->D leg alone misses it.
#[test]
#[ignore = "known failure: the Q-to-D leg loses ~1e-3, see README"]
fn round_trip_within_four_single_pass_errors() {
    let (fwd, _, round) = round_trip();
    assert!(round <= 4.0 * fwd, "round trip 1-rho_DD = {round:e} vs 4 x {fwd:e}");
}

#[test]
fn forward_starting_from_d_matches_default() {
    let p = ScenarioParams { tau: 5.0, delta_t: 5.0, ..ScenarioParams::fig3() };
    let a = run_full_transfer(&p).unwrap();
    let b = run_full_transfer_from(&p, &DensityMatrix::basis(Level::D)).unwrap();
    assert_eq!(a.p_q_final.to_bits(), b.p_q_final.to_bits());
}

#[test]
fn pump_time_matches_rate_estimate() {
    let p = ScenarioParams::fig3();
    let run = run_optical_pumping_prep(&p, &DensityMatrix::basis(Level::S)).unwrap();
    assert!(run.final_rho_dd > 1.0 - 1e-6);

    // resonant two-level steady state, then leakage into D at beta_PD gamma_P rho_PP
    let atom = AtomParams::calcium();
    let s = 2.0 * p.pump.rabi_b.powi(2) / atom.gamma_p.powi(2);
    let rho_pp = s / (2.0 * (1.0 + s));
    let rate = atom.beta_pd * atom.gamma_p * rho_pp;
    let estimate = (1e6f64).ln() / rate;
    assert!(run.pump_time > estimate / 2.0 && run.pump_time < estimate * 2.0, "{} vs {estimate}", run.pump_time);

    let mixed = DensityMatrix::new(
        (DensityMatrix::basis(Level::S).matrix() + DensityMatrix::basis(Level::D).matrix()) * tristirap::qcore::re(0.5),
    )
    .unwrap();
    let half = run_optical_pumping_prep(&p, &mixed).unwrap();
    assert!(half.pump_time <= run.pump_time);
}

#[test]
fn exact_dark_state_tracks_reverse_prep_target() {
    let p = presets::load("reverse").unwrap().unwrap().base().spec.params.clone();
    let run = run_reverse_transfer(&p).unwrap();
    let frame = dressed_frame(p.alpha_c().unwrap(), p.delta_c, Mode::Exact);
    let direct = expectation(&frame.q_s_state, &run.prep.final_state).unwrap();
    assert_eq!(direct, run.prep_fidelity_to_qs);
}
