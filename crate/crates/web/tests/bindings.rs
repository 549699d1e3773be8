use compgen_web::{mask_histogram, solve_ik, EpisodeView};

#[test]
fn every_interaction_can_be_recorded() {
    for action in 0..4 {
        for color in 0..6 {
            let v = EpisodeView::build(action, color, (action + color) % 9, 3, color % 2 == 0).unwrap();
            assert_eq!(v.frame_count(), 28);
            let rgba = v.rgba(27);
            assert_eq!(rgba.len(), v.width() * v.height() * 4);
            assert!(rgba.chunks_exact(4).all(|px| px[3] == 255));
            assert_eq!(v.sentence().split(' ').count(), 4);
        }
    }
}

#[test]
fn frames_beyond_the_end_clamp() {
    let v = EpisodeView::build(2, 1, 3, 0, false).unwrap();
    assert_eq!(v.rgba(500), v.rgba(27));
    assert_eq!(v.word(500), v.word(27));
}

#[test]
fn unreachable_targets_report_no_convergence() {
    let far = solve_ik(3.0, 3.0, 3.0);
    assert_eq!(far[8], 0.0);
    assert!(far[6] > 1.0);
}

#[test]
fn histogram_is_seeded() {
    assert_eq!(mask_histogram(500, 1), mask_histogram(500, 1));
}
