use rand::seq::SliceRandom;
use rand::Rng;
use stepguard_core::endpoint::{EndpointMap, PatternSegment, RequestDescriptor};

const METHODS: &[&str] = &["GET", "HEAD", "POST", "PUT", "PATCH", "DELETE"];
const FILLERS: &[&str] = &["o", "r", "7", "main", "v1", "42", "pulls", "issues", "x-y", "%E2%9C%93"];

/// Concrete path for an entry, with each placeholder filled by `fill`.
pub fn instantiate(segments: &[PatternSegment], mut fill: impl FnMut() -> String) -> String {
    let mut path = String::new();
    for seg in segments {
        path.push('/');
        match seg {
            PatternSegment::Literal(l) => path.push_str(l),
            PatternSegment::Placeholder(_) => path.push_str(&fill()),
        }
    }
    if path.is_empty() {
        path.push('/');
    }
    path
}

fn filler(rng: &mut impl Rng, literals: &[String]) -> String {
    match rng.gen_range(0..4) {
        0 => literals.choose(rng).cloned().unwrap_or_else(|| "x".into()),
        1 => FILLERS.choose(rng).unwrap().to_string(),
        _ => format!("{}", rng.gen_range(1..10_000)),
    }
}

/// Paths derived from the map's patterns with random fills, mutations,
/// truncations and extensions, so both hits and misses are exercised.
pub fn random_descriptors(rng: &mut impl Rng, map: &EndpointMap, n: usize) -> Vec<RequestDescriptor> {
    let entries = map.entries();
    let mut literals: Vec<String> = entries
        .iter()
        .flat_map(|e| e.segments.iter())
        .filter_map(|s| match s {
            PatternSegment::Literal(l) => Some(l.clone()),
            PatternSegment::Placeholder(_) => None,
        })
        .collect();
    literals.sort();
    literals.dedup();

    (0..n)
        .map(|_| {
            let entry = entries.choose(rng).expect("non-empty map");
            let mut segments: Vec<String> = entry
                .segments
                .iter()
                .map(|s| match s {
                    PatternSegment::Literal(l) => l.clone(),
                    PatternSegment::Placeholder(_) => filler(rng, &literals),
                })
                .collect();
            match rng.gen_range(0..6) {
                0 if !segments.is_empty() => {
                    let i = rng.gen_range(0..segments.len());
                    segments[i] = filler(rng, &literals);
                }
                1 if !segments.is_empty() => {
                    segments.pop();
                }
                2 => segments.push(filler(rng, &literals)),
                _ => {}
            }
            let method = if rng.gen_bool(0.7) {
                entry.method.clone()
            } else {
                METHODS.choose(rng).unwrap().to_string()
            };
            let slash = if rng.gen_bool(0.1) { "/" } else { "" };
            RequestDescriptor::new(method, "api.github.com", format!("/{}{slash}", segments.join("/")), "gen/action")
        })
        .collect()
}

/// A request trace attributed to `actions`, drawn from the map's patterns,
/// with roughly one in ten requests aimed at an unmapped path.
pub fn random_trace(rng: &mut impl Rng, map: &EndpointMap, actions: &[&str], len: usize) -> Vec<RequestDescriptor> {
    let entries = map.entries();
    (0..len)
        .map(|_| {
            let action = *actions.choose(rng).expect("at least one action");
            if rng.gen_bool(0.1) {
                let path = format!("/unmapped/{}", rng.gen_range(0..1000));
                return RequestDescriptor::new("GET", "api.github.com", path, action);
            }
            let entry = entries.choose(rng).expect("non-empty map");
            let path = instantiate(&entry.segments, || format!("p{}", rng.gen_range(0..100)));
            RequestDescriptor::new(&entry.method, "api.github.com", path, action)
        })
        .collect()
}
