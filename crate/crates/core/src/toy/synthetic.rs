use crate::corpus::{tokenize, TokenizedText};
use crate::rng::Rng;

const SUBJECTS: &[&str] = &[
    "the mayor", "the police", "three researchers", "the company", "senior officials", "the president",
    "armed rebels", "the national team", "striking workers", "the foreign minister", "the central bank",
    "local farmers", "the opposition party", "a federal judge", "health officials", "the army",
    "the prime minister", "foreign investors", "the airline", "union leaders", "the united nations",
    "leading scientists", "the governor", "fire crews",
];

const VERBS: &[&str] = &[
    "announced", "rejected", "approved", "won", "criticized", "unveiled", "postponed",
    "signed", "defended", "launched", "cancelled", "welcomed", "blocked", "proposed",
    "investigated", "ended", "backed", "delayed", "questioned", "opened",
];

const OBJECTS: &[&str] = &[
    "a new budget plan", "the peace deal", "the nobel prize", "higher interest rates",
    "a trade agreement", "the tax reform", "emergency aid", "the election results",
    "a rescue mission", "the merger", "new safety rules", "the ceasefire", "a vaccine program",
    "the world cup final", "oil exports", "a corruption inquiry", "the new stadium",
    "public spending cuts", "a climate treaty", "the bridge project", "wage increases",
    "the court ruling", "nuclear talks", "a record profit",
];

const PLACES: &[&str] = &[
    "paris", "tokyo", "cairo", "moscow", "london", "beijing", "nairobi", "lima", "berlin",
    "sydney", "madrid", "seoul", "delhi", "rome", "ottawa", "manila",
];

const DAYS: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];

const CLAUSES: &[&str] = &[
    "after long talks", "despite strong protests", "for the first time", "amid rising concerns",
    "under heavy pressure", "following a brief debate", "with broad support", "after a tense week",
];

fn pick<'a>(rng: &mut Rng, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len())]
}

/// Headline-like sentences from fixed templates:
/// `subject verb object [in place] [on day] [clause]` with a place or a day
/// always present, 7 to 16 words.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<TokenizedText> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let mut s = format!(
                "{} {} {}",
                pick(&mut rng, SUBJECTS),
                pick(&mut rng, VERBS),
                pick(&mut rng, OBJECTS)
            );
            let place = rng.unit_f64() < 0.6;
            let day = rng.unit_f64() < 0.5;
            if place || !day {
                s.push_str(" in ");
                s.push_str(pick(&mut rng, PLACES));
            }
            if day {
                s.push_str(" on ");
                s.push_str(pick(&mut rng, DAYS));
            }
            if rng.unit_f64() < 0.4 {
                s.push(' ');
                s.push_str(pick(&mut rng, CLAUSES));
            }
            tokenize(&s).expect("templates are non-empty")
        })
        .collect()
}
