use std::collections::BTreeMap;

use spkdlg::corpus::synth::{load_tables, save_tables, SynthCorpus};
use spkdlg::corpus::{generate_synthetic, Role, SynthSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn corpus(delta: f64, sessions: usize, seed: u64) -> (SynthSpec, SynthCorpus) {
    let spec = SynthSpec { sessions, delta, seed, ..SynthSpec::default() };
    let c = generate_synthetic(&spec).unwrap();
    (spec, c)
}

/// (role, previous primary or L, current primary) per turn.
fn transitions(c: &SynthCorpus) -> Vec<(Role, usize, usize)> {
    let l = c.tables.labels.len();
    let mut out = Vec::new();
    for (d, primaries) in c.dialogues.iter().zip(&c.trace.primary) {
        let mut prev = l;
        for (turn, &z) in d.turns.iter().zip(primaries) {
            out.push((turn.speaker, prev, z));
            prev = z;
        }
    }
    out
}

#[test]
fn roles_homogeneous_without_divergence() {
    let (_, c) = corpus(0.0, 834, 21);
    let obs = transitions(&c);
    assert!(obs.len() >= 10_000);
    let mut table: BTreeMap<(usize, usize), [f64; 2]> = BTreeMap::new();
    for &(r, p, z) in &obs {
        table.entry((p, z)).or_default()[r.index()] += 1.0;
    }
    let totals = [0, 1].map(|r| table.values().map(|c| c[r]).sum::<f64>());
    let n = totals[0] + totals[1];
    let mut stat = 0.0;
    for counts in table.values() {
        let cell = counts[0] + counts[1];
        for r in 0..2 {
            let e = cell * totals[r] / n;
            stat += (counts[r] - e).powi(2) / e;
        }
    }
    let dof = (table.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat:.1} on {dof} dof, p = {p:.4}");
}

/// Mean over previous intents of the total variation between the two roles'
/// next-intent distributions, estimated from counts.
fn role_divergence(delta: f64) -> f64 {
    let (_, c) = corpus(delta, 834, 5);
    let l = c.tables.labels.len();
    let mut counts = vec![vec![vec![0.0; l]; l + 1]; 2];
    for (r, p, z) in transitions(&c) {
        counts[r.index()][p][z] += 1.0;
    }
    let mut tv = 0.0;
    for p in 0..=l {
        let norm = |row: &Vec<f64>| {
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s.max(1.0)).collect::<Vec<_>>()
        };
        let (a, b) = (norm(&counts[0][p]), norm(&counts[1][p]));
        tv += 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    tv / (l + 1) as f64
}

#[test]
fn role_divergence_grows_with_delta() {
    let d: Vec<f64> = [0.0, 0.5, 1.0].into_iter().map(role_divergence).collect();
    assert!(d[0] <= d[1] && d[1] <= d[2], "{d:?}");
    assert!(d[2] > 0.5);
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b })
}

#[test]
fn role_aware_bayes_predictor_beats_pooled() {
    let (spec, c) = corpus(1.0, 300, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.tables.json");
    save_tables(&path, &spec, &c).unwrap();
    let (loaded_spec, tables, trace) = load_tables(&path).unwrap();
    assert_eq!(loaded_spec, spec);
    assert_eq!(tables, c.tables);

    let (mut role_hits, mut pooled_hits, mut n) = (0usize, 0usize, 0usize);
    for (d, primaries) in c.dialogues.iter().zip(&trace.primary) {
        let mut history = Vec::new();
        for (turn, &z) in d.turns.iter().zip(primaries) {
            if !history.is_empty() {
                role_hits += (argmax(&tables.posterior_next(&history, turn.speaker)) == z) as usize;
                pooled_hits += (argmax(&tables.pooled_next(&history)) == z) as usize;
                n += 1;
            }
            history.push((turn.speaker, z));
        }
    }
    let (r, p) = (role_hits as f64 / n as f64, pooled_hits as f64 / n as f64);
    assert!(r > p, "role-aware {r:.3} vs pooled {p:.3}");
}
