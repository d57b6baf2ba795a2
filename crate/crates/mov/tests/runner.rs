use mov::error::{exit, CliError};
use mov::runner;
use mov_core::data::{generate_synthetic, SyntheticConfig};
use mov_core::experiment::{Protocol, SweepGrid};
use mov_core::{Dataset, ModelKind, TrainConfig, ViewSchema};

fn small_protocol() -> Protocol {
    Protocol {
        k_folds: 3,
        sweep: SweepGrid {
            hidden_units: vec![4],
            hidden_layers: vec![1],
            lambda: vec![1.0],
            dropout: vec![0.0],
        },
        train: TrainConfig {
            max_epochs: 10,
            batch_size: Some(16),
            ..TrainConfig::default()
        },
        ..Protocol::default()
    }
}

fn data(classes: usize) -> Dataset {
    generate_synthetic(
        &SyntheticConfig {
            n_samples: 90,
            view_dims: vec![2, 2],
            classes,
            ..SyntheticConfig::default()
        },
        2,
    )
    .unwrap()
}

#[test]
fn outcomes_do_not_depend_on_worker_count() {
    let ds = data(2);
    let kinds = [ModelKind::Concat, ModelKind::Mov];
    let (_, one, c1) = runner::compare(&ds, &kinds, &small_protocol(), 3, 1).unwrap();
    let (_, four, c4) = runner::compare(&ds, &kinds, &small_protocol(), 3, 4).unwrap();
    assert_eq!(one, four);
    assert_eq!(c1, c4);
    let order: Vec<(ModelKind, usize)> = one.iter().map(|o| (o.kind, o.fold)).collect();
    assert_eq!(
        order,
        [(ModelKind::Concat, 0), (ModelKind::Concat, 1), (ModelKind::Concat, 2), (ModelKind::Mov, 0), (ModelKind::Mov, 1), (ModelKind::Mov, 2)]
    );
}

#[test]
fn fold_failures_carry_model_and_fold() {
    let mut ds = data(3);
    ds.schema = ViewSchema::new(ds.schema.view_names.clone(), vec![2, 2], vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let plan = mov_core::data::stratified_kfold(&ds, 3, 0).unwrap();
    let err = runner::run_folds(&ds, &plan, &[ModelKind::Avg, ModelKind::Mov], &small_protocol(), 0, 2).unwrap_err();
    match &err {
        CliError::Fold { model, fold, .. } => assert_eq!((*model, *fold), (ModelKind::Avg, 0)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().starts_with("avg, fold 0:"), "{err}");
    assert_eq!(err.exit_code(), exit::CONFIG);
}
