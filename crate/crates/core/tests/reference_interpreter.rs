//! Step-by-step reimplementation of the perturbed process and the joint
//! labelling with unrestricted field access, compared against the library.

use coalweb::excursion::{joint_run, JointState};
use coalweb::perturb::{perturbed_from_field, FollowState};
use coalweb::{ArrowField, ArrowSource, AuxSource, AuxiliaryWalk, LatticePoint};

#[derive(Debug, PartialEq)]
struct Step {
    x_perturbed: i64,
    x_true: i64,
    on_aux: bool,
    label: JointState,
}

fn reference(field: &ArrowField, aux: &AuxiliaryWalk, eps: i64, horizon: i64) -> Vec<Step> {
    let (mut x, mut y) = (0i64, 0i64);
    let mut on_aux = false;
    let mut out = Vec::new();
    for t in 0..=horizon {
        if !on_aux && x == 0 {
            on_aux = true;
        } else if on_aux && x.abs() == eps {
            on_aux = false;
        }
        let label = if on_aux {
            JointState::TwoDAux
        } else if x == y {
            JointState::OneDWeb
        } else {
            JointState::TwoDWeb
        };
        out.push(Step { x_perturbed: x, x_true: y, on_aux, label });
        if t == horizon {
            break;
        }
        let dx = if on_aux { aux.increment(t) } else { field.arrow(t, x) };
        let dy = field.arrow(t, y);
        x += dx;
        y += dy;
    }
    out
}

#[test]
fn perturbed_and_joint_match_reference() {
    for eps in [1, 2] {
        for seed in 0..1000u64 {
            let field = ArrowField::new(seed);
            let aux = AuxiliaryWalk::new(seed ^ 0x5555);
            for horizon in [1, 7, 16] {
                let expected = reference(&field, &aux, eps, horizon);

                let p = perturbed_from_field(&field, &aux, eps, LatticePoint::origin(), horizon).unwrap();
                p.check_invariants().unwrap();
                for (t, step) in expected.iter().enumerate() {
                    let t = t as i64;
                    assert_eq!(p.path.position(t), Some(step.x_perturbed), "seed {seed} eps {eps} t {t}");
                    if t < horizon {
                        let state = p.state_at(t).unwrap();
                        assert_eq!(state == FollowState::FollowAux, step.on_aux, "seed {seed} eps {eps} t {t}");
                    }
                }

                let run = joint_run(&field, &aux, eps, horizon).unwrap();
                let got: Vec<Step> = run
                    .samples
                    .iter()
                    .map(|s| Step {
                        x_perturbed: s.x_perturbed,
                        x_true: s.x_true,
                        on_aux: s.follow == FollowState::FollowAux,
                        label: s.state,
                    })
                    .collect();
                assert_eq!(got, expected, "seed {seed} eps {eps} horizon {horizon}");
            }
        }
    }
}
