use udnsim::campaign::{run_simulation, ModelSet, PredictorKind, SimConfig};
use udnsim::config::ScenarioConfig;
use udnsim::deployment::{sample_ppp_deployment, Area, SiteTemplate};
use udnsim::ml::{split_dataset, train_dtc, RoutePredictor};
use udnsim::mobility::{build_route_network, generate_dataset};

fn small_sim(sc: &ScenarioConfig) -> SimConfig {
    let mut cfg = sc.sim_config().unwrap();
    cfg.horizon_ms = 20_000;
    cfg.load_scale = 0.02;
    cfg.velocity_kmh = 30.0;
    cfg
}

#[test]
fn ppp_site_counts_have_poisson_moments() {
    let area = Area::new(1000.0, 1000.0).unwrap();
    let n = 2000;
    let counts: Vec<f64> = (0..n)
        .map(|seed| sample_ppp_deployment(50.0, area, &SiteTemplate::default(), seed).unwrap().len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // four standard errors: sqrt(50/n) for the mean, sqrt((50 + 2*50^2)/n)
    // for the variance
    assert!((mean - 50.0).abs() < 4.0 * (50.0 / n as f64).sqrt(), "mean {mean}");
    assert!((var - 50.0).abs() < 4.0 * ((50.0 + 5000.0) / n as f64).sqrt(), "var {var}");

    let d = sample_ppp_deployment(50.0, area, &SiteTemplate::default(), 9).unwrap();
    assert!(d.sites().iter().all(|s| area.contains(&s.position())));
}

#[test]
fn saved_model_drives_the_same_simulation() {
    let sc = ScenarioConfig::default();
    let net = build_route_network(&sc.area().unwrap()).unwrap();
    let data = generate_dataset(&net, &sc.mobility.demands, &sc.dataset_spec(), 3).unwrap();
    let (train, _) = split_dataset(&data, 0.75, 3).unwrap();
    let model = train_dtc(&train, &sc.ml.dtc()).unwrap();
    let reloaded = RoutePredictor::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(model, reloaded);

    let mut cfg = small_sim(&sc);
    cfg.predictor = PredictorKind::Dtc;
    let a = run_simulation(&cfg, &ModelSet::new().with(model), 5).unwrap();
    let b = run_simulation(&cfg, &ModelSet::new().with(reloaded), 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_screening_does_not_add_handovers() {
    let sc = ScenarioConfig::default();
    let cfg = small_sim(&sc);
    let total = |predictor| {
        let cfg = SimConfig { predictor, ..cfg.clone() };
        (0..20u64).map(|i| run_simulation(&cfg, &ModelSet::new(), 2023 ^ i).unwrap().ho_times).sum::<u64>()
    };
    let none = total(PredictorKind::None);
    let oracle = total(PredictorKind::Oracle);
    assert!(none > 0);
    assert!(oracle <= none, "oracle {oracle} none {none}");
}
