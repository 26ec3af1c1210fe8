use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{Chance, Polarity, Statement};
use crate::error::{Error, Result};
use crate::rng;

pub const CHANCE_DATASET: &str = "Chance";

/// An urn with ball counts per color and the color the outcome sentence asks about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Urn {
    pub counts: Vec<(String, u32)>,
    pub query: String,
}

impl Urn {
    pub fn new(counts: &[(&str, u32)], query: &str) -> Self {
        Self {
            counts: counts.iter().map(|(c, n)| (c.to_string(), *n)).collect(),
            query: query.to_string(),
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|(_, n)| n).sum()
    }

    pub fn chance(&self) -> Result<Chance> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Argument("urn holds no balls".into()));
        }
        let hits = self
            .counts
            .iter()
            .find(|(c, _)| *c == self.query)
            .map(|(_, n)| *n)
            .ok_or_else(|| Error::Argument(format!("queried color {:?} is not in the urn", self.query)))?;
        Chance::new(hits, total)
    }

    /// Setup prompt and outcome sentence as one text.
    pub fn text(&self) -> String {
        let balls: Vec<String> = self
            .counts
            .iter()
            .map(|(color, n)| {
                let noun = if *n == 1 { "ball" } else { "balls" };
                format!("{} {color} {noun}", count_word(*n))
            })
            .collect();
        format!(
            "There is an urn with {}, and nothing else. A ball is drawn uniformly at random. The ball drawn is {}.",
            balls.join(", "),
            self.query
        )
    }
}

fn count_word(n: u32) -> String {
    const WORDS: [&str; 21] = [
        "no", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
        "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
    ];
    WORDS.get(n as usize).map_or_else(|| n.to_string(), |w| w.to_string())
}

/// One chance-labeled statement per urn, in a seeded order. The chance is
/// the exact ratio of the queried color's count to the total.
pub fn generate_chance_set(urns: &[Urn], seed: u64) -> Result<Vec<Statement>> {
    let mut built = urns
        .iter()
        .map(|u| Ok((u.text(), u.chance()?)))
        .collect::<Result<Vec<_>>>()?;
    built.shuffle(&mut rng::stream(seed, "dataset/chance"));
    Ok(built
        .into_iter()
        .enumerate()
        .map(|(i, (text, chance))| Statement {
            id: format!("{CHANCE_DATASET}-{i:04}"),
            text,
            label: None,
            dataset: CHANCE_DATASET.to_string(),
            polarity: Polarity::Positive,
            pair_id: None,
            chance: Some(chance),
        })
        .collect())
}

pub const URN_COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "purple", "white"];

/// `n` seeded two-color urns holding 2 to 10 balls; either color may be
/// queried, including one with no balls.
pub fn random_urns(n: usize, seed: u64) -> Vec<Urn> {
    let mut rng = rng::stream(seed, "dataset/urns");
    (0..n)
        .map(|_| {
            let colors: Vec<&str> = URN_COLORS.choose_multiple(&mut rng, 2).copied().collect();
            let total = rng.random_range(2..=10u32);
            let first = rng.random_range(0..=total);
            let query = colors[rng.random_range(0..2)];
            Urn::new(&[(colors[0], first), (colors[1], total - first)], query)
        })
        .collect()
}

/// Urn texts whose outcome is a draw from the urn itself, `draws` per urn.
/// Colors with no balls are never drawn.
pub fn sample_urn_texts(urns: &[Urn], draws: usize, seed: u64) -> Result<Vec<String>> {
    let mut rng = rng::stream(seed, "dataset/urn-draws");
    let mut out = Vec::with_capacity(urns.len() * draws);
    for urn in urns {
        let total = urn.total();
        if total == 0 {
            return Err(Error::Argument("urn holds no balls".into()));
        }
        for _ in 0..draws {
            let mut ball = rng.random_range(0..total);
            let drawn = urn
                .counts
                .iter()
                .find(|(_, n)| {
                    let hit = ball < *n;
                    ball = ball.saturating_sub(*n);
                    hit
                })
                .expect("ball index below total");
            out.push(Urn { query: drawn.0.clone(), ..urn.clone() }.text());
        }
    }
    Ok(out)
}
