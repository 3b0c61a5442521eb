//! Filter consistency when the truth obeys the filter's own model.

mod common;

#[test]
fn averaged_nees_stays_in_the_chi_square_band() {
    let c = common::nees_coverage(50, 10.0);
    println!("NEES band [{:.2}, {:.2}], mean {:.2}, inside {:.1} %", c.band.0, c.band.1, c.mean, 100.0 * c.inside);
    assert!(c.inside >= 0.8, "only {:.1} % of steps inside the band", 100.0 * c.inside);
}
