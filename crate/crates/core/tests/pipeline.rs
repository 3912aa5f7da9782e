//! End-to-end flows through the public API and the file formats.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use thermo_ops::birkhoff::{decompose, random_pullback_mixture};
use thermo_ops::cone::{hull_membership, random_population, thermal_cone};
use thermo_ops::io::{read_context, read_decomposition, read_matrix, read_population, ConeFile, DecompositionFile, SequenceFile};
use thermo_ops::majorization::thermo_majorizes;
use thermo_ops::numeric::rational;
use thermo_ops::synthesis::{synthesize, verify_sequence};
use thermo_ops::{is_gibbs_preserving, GibbsContext, Population, Rational};

#[test]
fn synthesised_sequence_decomposes_into_pullbacks() {
    let ctx = read_context(r#"{"d": [4, 2, 1]}"#, false).unwrap();
    let p: Population<Rational> = read_population(r#"["1", "0", "0"]"#).unwrap();
    let q: Population<Rational> = read_population(r#"["4/7", "2/7", "1/7"]"#).unwrap();
    let seq = synthesize(&p, &q, &ctx, true).unwrap();
    assert!(seq.steps.len() <= 3);
    assert!(verify_sequence(&seq, &p, &q, &ctx, 0.0).ok);

    let text = serde_json::to_string(&SequenceFile::new(&seq, &ctx, false).unwrap()).unwrap();
    let t = read_matrix::<Rational>(&text).unwrap();
    assert_eq!(t, seq.to_matrix(&ctx).unwrap());
    assert!(is_gibbs_preserving(&t, &ctx, 0.0).unwrap());
    assert_eq!(t.apply_population(&p).unwrap(), q);

    let dec = decompose(&t, &ctx, 0.0).unwrap();
    let text = serde_json::to_string(&DecompositionFile::new(&dec, false)).unwrap();
    let back = read_decomposition::<Rational>(&text).unwrap();
    assert_eq!(back, dec);
    assert_eq!(back.reconstruct(), t);
}

#[test]
fn float_files_read_back_as_floats() {
    let ctx = GibbsContext::from_degeneracies(vec![3, 2, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random_pullback_mixture(&ctx, 3, &mut rng).unwrap();
    let dec = decompose(&t, &ctx, 0.0).unwrap();
    let text = serde_json::to_string(&DecompositionFile::new(&dec, true)).unwrap();
    let back = read_decomposition::<f64>(&text).unwrap();
    let diff = back.reconstruct().max_diff(&t.to_f64());
    assert!(diff < 1e-15, "{diff}");
}

#[test]
fn cone_vertices_round_trip_and_are_reachable() {
    let ctx = GibbsContext::from_degeneracies(vec![3, 3, 1, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_population(4, 30, &mut rng);
    let cone = thermal_cone(&p, &ctx, true).unwrap();
    let text = serde_json::to_string(&ConeFile::new(&cone, false)).unwrap();
    let back = serde_json::from_str::<ConeFile>(&text).unwrap().parse::<Rational>().unwrap();
    assert_eq!(back, cone);
    for v in &cone.vertices {
        assert!(thermo_majorizes(&p, v, &ctx, 0.0).unwrap());
        assert!(hull_membership(&p, v, &ctx, 1e-9).unwrap());
    }
    let centre = Population::new(ctx.gibbs_rational().unwrap()).unwrap();
    assert!(hull_membership(&p, &centre, &ctx, 1e-9).unwrap());
    let pure = Population::new(vec![rational(0, 1), rational(0, 1), rational(1, 1), rational(0, 1)]).unwrap();
    assert_eq!(
        hull_membership(&p, &pure, &ctx, 1e-9).unwrap(),
        thermo_majorizes(&p, &pure, &ctx, 0.0).unwrap()
    );
}
