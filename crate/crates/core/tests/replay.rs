use coalweb::perturb::{audited_replay, perturbed_trajectory, PerturbedRecord};
use coalweb::web::{AuditedAux, AuditedView, RecordedAux, RecordedView};
use coalweb::{ArrowField, AuxiliaryWalk, LatticePoint, StripView};

#[test]
fn runs_read_only_their_half_planes_and_replay_exactly() {
    for seed in 0..200 {
        for eps in [1, 2, 8] {
            let a = audited_replay(seed, eps, 5_000).unwrap();
            assert_eq!(a.violations(), 0, "seed {seed} eps {eps}: {a:?}");
        }
    }
}

#[test]
fn replay_detects_a_changed_record() {
    let field = ArrowField::new(3);
    let aux = AuxiliaryWalk::new(3);
    let up = AuditedView::new(StripView::upper(&field));
    let down = AuditedView::new(StripView::lower(&field));
    let logged = AuditedAux::new(&aux);
    let original = perturbed_trajectory(&up, &down, &logged, 2, LatticePoint::origin(), 2_000).unwrap();
    let mut record = PerturbedRecord { upper: up.record(), lower: down.record(), aux: logged.record() };
    assert!(!record.upper.cells.is_empty());
    record.upper.cells[0][2] *= -1;
    let replayed = perturbed_trajectory(
        RecordedView::from_record(&record.upper).unwrap(),
        RecordedView::from_record(&record.lower).unwrap(),
        RecordedAux::from_record(&record.aux),
        2,
        LatticePoint::origin(),
        2_000,
    );
    // Either the path changes or it wanders into cells that were never read.
    assert!(replayed.map_or(true, |p| p != original));
}
