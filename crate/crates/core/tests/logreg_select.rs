use decode_core::data::{Answers, CovidTest, Feature, SurveyRecord};
use decode_core::logreg::{
    bayes_factor, finalize, forward_select_bf, mrcv_rank, DesignMatrix, IrlsOptions, MrcvOptions,
};
use decode_core::{sigmoid, Cohort, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bayes_factor_examples() {
    // BIC = -2 ll + k ln n; pick ll so that BIC_small = 100 and BIC_large = 95.
    let n = 50usize;
    let ln_n = (n as f64).ln();
    let ll_small = -(100.0 - 2.0 * ln_n) / 2.0;
    let ll_large = -(95.0 - 3.0 * ln_n) / 2.0;
    let bf = bayes_factor(ll_small, 2, ll_large, 3, n).unwrap();
    assert!((bf - 2.5f64.exp()).abs() < 1e-9);
    assert!((bf - 12.18).abs() < 0.005);

    let equal = bayes_factor(-(100.0 - ln_n) / 2.0, 1, -(100.0 - 2.0 * ln_n) / 2.0, 2, n).unwrap();
    assert!((equal - 1.0).abs() < 1e-12);

    let bf = bayes_factor(-40.0, 1, -40.0, 2, 100).unwrap();
    assert!((bf - 0.1).abs() < 1e-12);
    assert!(bayes_factor(-1.0, 1, -1.0, 2, 1).is_err());
}

fn record(a: Answers, label: bool) -> SurveyRecord {
    SurveyRecord {
        answers: a,
        symptomatic: true,
        covid_test: CovidTest::from(label),
        holdout_flag: false,
    }
}

/// Binary features cough, dyspnoea, headache, dizziness, skin_reactions drawn
/// at random; labels depend on the first two only.
fn planted(n: usize, seed: u64, b_cough: f64, b_dysp: f64) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| {
            let mut a = Answers::default();
            for f in [
                Feature::Cough,
                Feature::Dyspnoea,
                Feature::Headache,
                Feature::Dizziness,
                Feature::SkinReactions,
            ] {
                *a.tri_state_mut(f).unwrap() = Some(rng.random::<bool>());
            }
            a.days_of_symptoms = Some(3);
            let eta = -1.0
                + b_cough * f64::from(u8::from(a.cough == Some(true)))
                + b_dysp * f64::from(u8::from(a.dyspnoea == Some(true)));
            let y = rng.random::<f64>() < sigmoid(eta);
            record(a, y)
        })
        .collect();
    Cohort::new(records, "planted")
}

fn terms() -> Vec<Term> {
    [
        Feature::Cough,
        Feature::Dyspnoea,
        Feature::Headache,
        Feature::Dizziness,
        Feature::SkinReactions,
    ]
    .into_iter()
    .map(Term::Base)
    .collect()
}

#[test]
fn forward_selection_finds_planted_terms_first() {
    let c = planted(2000, 1, 2.5, 1.0);
    let d = DesignMatrix::complete_cases(&c, &terms());
    let rows: Vec<usize> = (0..d.len()).collect();
    let s = forward_select_bf(&d, &[0, 1, 2, 3, 4], &rows, &IrlsOptions::default()).unwrap();
    assert_eq!(&s.selected[..2], &[0, 1]);
    assert!(s.steps.iter().all(|st| st.bayes_factor >= 1.0));
}

#[test]
fn null_data_selects_nothing() {
    let c = planted(3000, 2, 0.0, 0.0);
    let d = DesignMatrix::complete_cases(&c, &terms());
    let rows: Vec<usize> = (0..d.len()).collect();
    let s = forward_select_bf(&d, &[0, 1, 2, 3, 4], &rows, &IrlsOptions::default()).unwrap();
    assert!(s.selected.is_empty(), "{:?}", s.steps);
}

#[test]
fn mrcv_is_deterministic_and_ranks_planted_term_first() {
    let c = planted(600, 3, 2.5, 0.0);
    let d = DesignMatrix::complete_cases(&c, &terms());
    let opts = MrcvOptions {
        seed: 9,
        ..MrcvOptions::default()
    };
    let a = mrcv_rank(&d, &opts).unwrap();
    let b = mrcv_rank(&d, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.repeats, 100);
    assert_eq!(a.ranking[0].term, Term::Base(Feature::Cough));
    let first = a
        .outcomes
        .iter()
        .filter(|o| o.selected.first().map(String::as_str) == Some("cough"))
        .count();
    assert!(first >= 95, "planted term first in {first} of 100 repeats");
}

#[test]
fn single_repeat_ranking_is_its_selection_order() {
    let c = planted(600, 4, 2.5, 1.5);
    let d = DesignMatrix::complete_cases(&c, &terms());
    let r = mrcv_rank(
        &d,
        &MrcvOptions {
            repeats: 1,
            ..MrcvOptions::default()
        },
    )
    .unwrap();
    assert_eq!(r.outcomes.len(), 1);
    let ranked: Vec<String> = r.ranking.iter().map(|t| t.term.name()).collect();
    assert_eq!(ranked, r.outcomes[0].selected);
}

/// Days of symptoms (uniform 1..=14) and cough drive the label; three binary
/// noise features follow in the ranking.
fn planted_numeric(n: usize, seed: u64) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| {
            let mut a = Answers::default();
            for f in [
                Feature::Cough,
                Feature::Headache,
                Feature::Dizziness,
                Feature::SkinReactions,
            ] {
                *a.tri_state_mut(f).unwrap() = Some(rng.random::<bool>());
            }
            let days = rng.random_range(1..=14u32);
            a.days_of_symptoms = Some(days);
            let eta = 1.0 - 0.3 * f64::from(days) + 1.5 * f64::from(u8::from(a.cough == Some(true)));
            let y = rng.random::<f64>() < sigmoid(eta);
            record(a, y)
        })
        .collect();
    Cohort::new(records, "planted numeric")
}

#[test]
fn finalize_prefers_true_prefix() {
    let mut twos = 0;
    for seed in 0..7 {
        let c = planted_numeric(2000, 10 + seed);
        let ranking: Vec<Term> = [
            Feature::DaysOfSymptoms,
            Feature::Cough,
            Feature::Headache,
            Feature::Dizziness,
            Feature::SkinReactions,
        ]
        .into_iter()
        .map(Term::Base)
        .collect();
        let opts = MrcvOptions {
            seed,
            ..MrcvOptions::default()
        };
        let (model, report) = finalize(&c, &ranking, &opts).unwrap();
        assert_eq!(report.prefixes.len(), ranking.len());
        assert_eq!(model.terms.len(), report.chosen);
        if report.chosen == 2 {
            twos += 1;
        }
    }
    assert!(twos >= 4, "prefix 2 chosen in {twos} of 7 seeds");
}

#[test]
fn finalize_single_term() {
    let c = planted(400, 5, 2.0, 0.0);
    let (model, _) = finalize(&c, &[Term::Base(Feature::Cough)], &MrcvOptions::default()).unwrap();
    assert_eq!(model.terms, vec![Term::Base(Feature::Cough)]);
    assert_eq!(model.coefficients.len(), 2);
}
