use std::path::Path;

use phi4_core::langevin::{
    connected_4pt, four_point_remainder, run_chain_from, ChainState, MeasurementSet, SCALARS,
};

use crate::config::SimulationSpec;
use crate::report::{fmt, Report, Table};
use crate::HarnessError;

pub const CHECKPOINT_FILE: &str = "chain.ckpt";

/// Runs one chain and leaves a checkpoint in `out`. With `resume`, an
/// existing checkpoint there is continued without burn-in.
pub fn run_simulation(spec: &SimulationSpec, out: &Path, resume: bool) -> Result<Report, HarnessError> {
    std::fs::create_dir_all(out)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let mut cfg = spec.sim.clone();
    let mut state = if resume && ckpt.exists() {
        cfg.burn_in = 0;
        ChainState::read_checkpoint(&ckpt)?
    } else {
        ChainState::new(&cfg.lattice, cfg.seed)
    };
    let ms = run_chain_from(&cfg, &spec.probes(), &mut state)?;
    state.write_checkpoint(&ckpt)?;
    let mut rep = Report::new("simulate");
    rep.tables.push(measurement_table(&ms)?);
    Ok(rep)
}

/// Every recorded observable as `observable, config_id, value, stderr, n_batches`.
pub fn measurement_table(ms: &MeasurementSet) -> Result<Table, HarnessError> {
    let mut t = Table::new("measurements", &["observable", "config_id", "value", "stderr", "n_batches"]);
    let nb = ms.n_batches().to_string();
    let mut put = |name: &str, values: &[f64], stderr: &[f64]| {
        for (i, (v, s)) in values.iter().zip(stderr).enumerate() {
            t.push(vec![name.to_string(), i.to_string(), fmt(*v), fmt(*s), nb.clone()]);
        }
    };
    for (obs, name) in SCALARS {
        let (m, s) = ms.scalar(obs)?;
        put(name, &[m], &[s]);
    }
    let s2 = ms.s2()?;
    put("s2", &s2.values, &s2.stderr);
    if let Some(s4) = ms.s4()? {
        put("s4", &s4.values, &s4.stderr);
        let u4 = connected_4pt(ms)?;
        put("u4", &u4.values, &u4.stderr);
    }
    if let Some(r2) = ms.two_point_remainder()? {
        put("s2_minus_c_over_lambda2", &r2.values, &r2.stderr);
        if let Ok((u4, corrected)) = four_point_remainder(ms) {
            put("u4_remainder", &u4.values, &u4.stderr);
            put("u4_plus_6_lambda_star", &corrected.values, &corrected.stderr);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SimulationSpec {
        SimulationSpec::from_toml_str(
            "size = 4\nlambda = 0.1\nburn_in = 100\nn_samples = 256\nn_batches = 8\nfour_point_stride = 2\nremainders = true\n",
        )
        .unwrap()
    }

    #[test]
    fn resume_continues_the_chain() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec();
        let first = run_simulation(&s, dir.path(), false).unwrap();
        let after_one = ChainState::read_checkpoint(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(after_one.step_count, (100 + 256 * 5) as u64);
        let second = run_simulation(&s, dir.path(), true).unwrap();
        let after_two = ChainState::read_checkpoint(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(after_two.step_count, after_one.step_count + 256 * 5);
        assert_ne!(first.tables[0], second.tables[0]);
        // a fresh run from scratch reproduces the first one exactly
        let other = tempfile::tempdir().unwrap();
        assert_eq!(run_simulation(&s, other.path(), true).unwrap(), first);
    }

    #[test]
    fn table_lists_every_observable() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_simulation(&spec(), dir.path(), false).unwrap();
        let t = &r.tables[0];
        for name in ["phi", "energy", "s2", "s4", "u4", "s2_minus_c_over_lambda2", "u4_plus_6_lambda_star"] {
            assert!(t.rows.iter().any(|row| row[0] == name), "{name}");
        }
        assert!(t.rows.iter().all(|row| row[4] == "8"));
    }
}
