use crate::error::{Error, Result};

/// Annotator certainty codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Certainty {
    NotVisible = 1,
    Guessing = 2,
    Probably = 3,
    Definitely = 4,
}

impl Certainty {
    pub const ALL: [Certainty; 4] = [
        Certainty::NotVisible,
        Certainty::Guessing,
        Certainty::Probably,
        Certainty::Definitely,
    ];

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Certainty::NotVisible),
            2 => Ok(Certainty::Guessing),
            3 => Ok(Certainty::Probably),
            4 => Ok(Certainty::Definitely),
            other => Err(Error::Domain(format!(
                "certainty code {other} is not in 1..=4"
            ))),
        }
    }
}

/// Maps a binary attribute annotation with certainty onto `[0, 1]` in
/// sixths. "Not visible" carries no evidence either way and maps to 1/2
/// whatever the stated presence.
pub fn map_certainty(exists: bool, certainty: Certainty) -> f64 {
    let sixths: u8 = match (exists, certainty) {
        (false, Certainty::Definitely) => 0,
        (false, Certainty::Probably) => 1,
        (false, Certainty::Guessing) => 2,
        (_, Certainty::NotVisible) => 3,
        (true, Certainty::Guessing) => 4,
        (true, Certainty::Probably) => 5,
        (true, Certainty::Definitely) => 6,
    };
    f64::from(sixths) / 6.0
}

/// [`map_certainty`] taking the raw certainty code.
pub fn map_annotation(exists: bool, certainty_code: u8) -> Result<f64> {
    Ok(map_certainty(exists, Certainty::from_code(certainty_code)?))
}
