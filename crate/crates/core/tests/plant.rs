use dcep_core::plant::constraints::{eval_constraints, forward_state, Decision};
use dcep_core::plant::envelope::admissible_envelopes;
use dcep_core::plant::power::{fan_power, pump_power};
use dcep_core::plant::projection::analytic_projection;
use dcep_core::plant::{plant_solver_config, plant_step, ControlInput, Disturbance, PlantState};
use dcep_core::PlantParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state() -> impl Strategy<Value = PlantState> {
    (10.0..16.0, 0.08..0.92, 5.0..8.0, 11.0..16.0, 5.0..9.0, 29.0..36.0, 27.0..31.0).prop_map(
        |(t_lwr, s_twc, t_twc, t_tww, t_chws, t_cwr, t_cws)| PlantState::new(t_lwr, s_twc, t_twc, t_tww, t_chws, t_cwr, t_cws),
    )
}

fn disturbance() -> impl Strategy<Value = Disturbance> {
    (23.0..27.0, 200.0..2500.0).prop_map(|(t_oawb, q_l_ref)| Disturbance { t_oawb, q_l_ref })
}

/// Random admissible command drawn from the envelope.
fn command(x: &PlantState, w: &Disturbance, p: &PlantParams, seed: u64) -> Option<ControlInput> {
    let envs = admissible_envelopes(x, w, p);
    if envs.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = envs[(seed as usize) % envs.len()];
    Some(env.sample(&mut rng))
}

/// Independent straight-line evaluation of every equality residual.
fn reference_residuals(z: &[f64; 11], x: &PlantState, u: &ControlInput, p: &PlantParams) -> [f64; 8] {
    let c = p.c_pw;
    let (m_lw, m_tw) = (u.m_lw, u.m_tw);
    let m_sw = m_lw + m_tw;
    let t_sw = x.t_chws;
    let t_lws = if m_tw < 0.0 { t_sw + m_tw / m_lw * (t_sw - x.t_twc) } else { t_sw };
    let t_rw = if m_tw > 0.0 { x.t_lwr + m_tw / m_sw * (x.t_tww - x.t_lwr) } else { x.t_lwr };
    let m_chw = u.n_ch as f64 * p.m_indv;
    let m_bp = m_chw - m_sw;
    let t_chwr = if m_chw > 0.0 { t_rw + m_bp / m_chw * (x.t_chws - t_rw) } else { t_rw };
    let k = 273.15;
    let ratio = (x.t_cws + k) / (x.t_chws + k);
    let unit = |q: f64| ((ratio - 1.0) * q - p.beta1 + p.beta2 * (x.t_cws + k) - p.beta3 * ratio).max(0.0);
    let p_ch = if u.n_ch == 0 { 0.0 } else { u.n_ch as f64 * unit(z[9] / u.n_ch as f64) };
    let q_cond = z[9] + p.eta1 * p_ch;
    let dt = p.t_s;
    let t_tww = if m_tw < 0.0 { x.t_tww + dt * m_tw / (p.m_tes * x.s_tww - dt * m_tw) * (x.t_tww - x.t_lwr) } else { x.t_tww };
    let t_twc = if m_tw > 0.0 { x.t_twc + dt * m_tw / (p.m_tes * x.s_twc + dt * m_tw) * (t_sw - x.t_twc) } else { x.t_twc };
    let t_chws = if u.n_ch == 0 { x.t_chws } else { t_chwr - z[9] / (c * m_chw) };
    [
        z[0] - (z[8] + c * m_lw * t_lws) / (c * m_lw),
        z[2] - (x.s_twc + dt * m_tw / p.m_tes),
        z[1] - (x.s_tww - dt * m_tw / p.m_tes),
        z[4] - t_tww,
        z[3] - t_twc,
        z[5] - t_chws,
        z[6] - (q_cond / (c * u.m_cw) + x.t_cws),
        z[7] - (x.t_cwr - z[10] / (c * u.m_cw)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn residuals_match_reference(x in state(), w in disturbance(), seed in any::<u64>(),
                                 noise in prop::array::uniform11(-2.0..2.0f64)) {
        let p = PlantParams::default();
        let Some(u) = command(&x, &w, &p, seed) else { return Ok(()) };
        let mut z = analytic_projection(&x, &u, &w, &p).unwrap().to_array();
        for i in 0..11 {
            z[i] += noise[i] * if i >= 8 { 50.0 } else { 0.5 };
        }
        let ev = eval_constraints(&Decision::from_slice(&z), &x, &u, &w, &p).unwrap();
        let reference = reference_residuals(&z, &x, &u, &p);
        for r in 0..8 {
            prop_assert!((ev.equality[r] - reference[r]).abs() < 1e-9, "residual {}: {} vs {}", r, ev.equality[r], reference[r]);
        }
    }

    #[test]
    fn solver_step_matches_closed_form(x in state(), w in disturbance(), seed in any::<u64>()) {
        let p = PlantParams::default();
        let Some(u) = command(&x, &w, &p, seed) else { return Ok(()) };
        let step = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config()).unwrap();
        let exact = analytic_projection(&x, &u, &w, &p).unwrap();
        let (a, b) = (step.decision.to_array(), exact.to_array());
        for i in 0..11 {
            prop_assert!((a[i] - b[i]).abs() < 1e-4 * (1.0 + b[i].abs()), "entry {}: {} vs {}", i, a[i], b[i]);
        }
    }

    #[test]
    fn step_invariants(x in state(), w in disturbance(), seed in any::<u64>()) {
        let p = PlantParams::default();
        let Some(u) = command(&x, &w, &p, seed) else { return Ok(()) };
        let step = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config()).unwrap();
        let s = step.state;
        prop_assert_eq!(s.s_twc + s.s_tww, 1.0);
        prop_assert!((s.s_twc - x.s_twc - p.t_s * u.m_tw / p.m_tes).abs() < 1e-12);
        let ev = eval_constraints(&step.decision, &x, &u, &w, &p).unwrap();
        prop_assert!(ev.worst_slack() >= -1e-6, "{:?}", ev.inequality);
        let o = step.outputs;
        if u.n_ch > 0 {
            let m_chw = u.n_ch as f64 * p.m_indv;
            let balance = p.c_pw * m_chw * (ev.mix.t_chwr - s.t_chws);
            prop_assert!((balance - o.q_ch).abs() <= 1e-6 * o.q_ch.abs().max(1.0));
        }
        prop_assert!((o.q_cond - (o.q_ch + p.eta1 * o.p_ch)).abs() <= 1e-6 * o.q_cond.abs().max(1.0));
        prop_assert!(o.q_l >= -1e-9 && o.q_l <= w.q_l_ref + 1e-9);
        for v in [o.p_ch, o.p_chw_pump, o.p_cw_pump, o.p_ct] {
            prop_assert!(v >= 0.0);
        }
        prop_assert_eq!(o.p_tot, o.p_ch + o.p_ct + o.p_chw_pump + o.p_cw_pump);
    }

    #[test]
    fn more_requested_load_never_lowers_met_load(x in state(), w in disturbance(), seed in any::<u64>(), extra in 0.0..800.0f64) {
        let p = PlantParams::default();
        let Some(u) = command(&x, &w, &p, seed) else { return Ok(()) };
        let cfg = plant_solver_config();
        let lo = plant_step(&x, &u, &w, 0.1, &p, &cfg).unwrap();
        let w2 = Disturbance { q_l_ref: w.q_l_ref + extra, ..w };
        let hi = plant_step(&x, &u, &w2, 0.1, &p, &cfg).unwrap();
        prop_assert!(hi.outputs.q_l >= lo.outputs.q_l - 1e-6 * w2.q_l_ref);
    }

    #[test]
    fn fan_strictly_increasing(a in 0.0..3.0f64, d in 1e-3..1.0f64) {
        prop_assert!(fan_power(a + d, 8.0) > fan_power(a, 8.0));
    }

    #[test]
    fn pump_nondecreasing(m in 0.0..300.0f64, d in 0.0..50.0f64, c in prop::array::uniform4(0.0..5.0f64)) {
        prop_assert!(pump_power(m + d, c).unwrap() >= pump_power(m, c).unwrap());
    }
}

#[test]
fn forward_point_has_zero_residuals_everywhere() {
    let p = PlantParams::default();
    let x = PlantState::nominal(&p);
    let w = Disturbance { t_oawb: 25.0, q_l_ref: 1500.0 };
    let u = ControlInput { m_lw: 50.0, m_tw: -15.0, n_ch: 2, m_cw: 120.0, m_oa: 1.2 };
    let next = forward_state(&x, &u, 1400.0, 900.0, 1100.0, &p).unwrap();
    let z = Decision { next, q_l: 1400.0, q_ch: 900.0, q_ct: 1100.0 };
    let ev = eval_constraints(&z, &x, &u, &w, &p).unwrap();
    assert!(ev.max_equality_violation() <= 1e-10);
}

#[test]
fn overload_saturates_chillers() {
    let p = PlantParams::default();
    let x = PlantState::new(16.0, 0.5, 6.5, 16.0, 8.0, 33.0, 29.0);
    let w = Disturbance { t_oawb: 25.0, q_l_ref: 20_000.0 };
    let u = ControlInput { m_lw: 50.0, m_tw: 0.0, n_ch: 2, m_cw: 250.0, m_oa: 2.0 };
    let step = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config()).unwrap();
    assert!(step.outputs.q_l < w.q_l_ref);
    assert!((step.outputs.q_ch - 2.0 * p.q_ch_indv).abs() < 1e-3, "{}", step.outputs.q_ch);
}
