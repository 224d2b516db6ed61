use std::fmt;
use std::str::FromStr;

/// The ten gesture classes, with a stable integer encoding 0-9 in the listed
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureLabel {
    Circle,
    Semicircle,
    Infinity,
    Tilde,
    Triangle,
    Square,
    Zigzag,
    VLine,
    HLine,
    LetterS,
}

impl GestureLabel {
    pub const COUNT: usize = 10;

    pub const ALL: [GestureLabel; Self::COUNT] = [
        GestureLabel::Circle,
        GestureLabel::Semicircle,
        GestureLabel::Infinity,
        GestureLabel::Tilde,
        GestureLabel::Triangle,
        GestureLabel::Square,
        GestureLabel::Zigzag,
        GestureLabel::VLine,
        GestureLabel::HLine,
        GestureLabel::LetterS,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Circle => "circle",
            GestureLabel::Semicircle => "semicircle",
            GestureLabel::Infinity => "infinity",
            GestureLabel::Tilde => "tilde",
            GestureLabel::Triangle => "triangle",
            GestureLabel::Square => "square",
            GestureLabel::Zigzag => "zigzag",
            GestureLabel::VLine => "vline",
            GestureLabel::HLine => "hline",
            GestureLabel::LetterS => "letter_s",
        }
    }

    /// Comma-separated list of all label names.
    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown gesture label {:?} (valid labels: {})",
            self.0,
            GestureLabel::valid_names()
        )
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for GestureLabel {
    type Err = UnknownLabel;

    /// Case-insensitive match against the label names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownLabel(needle.to_string()))
    }
}
