//! Chi-square upper quantiles for gating, dof 1..=9.

/// `TABLE[dof - 1] = (q_0.95, q_0.99)`
const TABLE: [(f64, f64); 9] = [
    (3.841458820694124, 6.6348966010212145),
    (5.991464547107979, 9.21034037197618),
    (7.814727903251178, 11.344866730144373),
    (9.487729036781154, 13.276704135987622),
    (11.070497693516351, 15.08627246938899),
    (12.591587243743977, 16.811893829770927),
    (14.067140449340169, 18.475306906582357),
    (15.507313055865453, 20.090235029663233),
    (16.918977604620448, 21.665994333461924),
];

pub const SUPPORTED_PROBS: [f64; 2] = [0.95, 0.99];

/// `None` for probabilities other than 0.95 / 0.99 or dof outside 1..=9.
pub fn quantile(prob: f64, dof: usize) -> Option<f64> {
    let row = TABLE.get(dof.checked_sub(1)?)?;
    if prob == 0.95 {
        Some(row.0)
    } else if prob == 0.99 {
        Some(row.1)
    } else {
        None
    }
}
