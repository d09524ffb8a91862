use stepguard_core::endpoint::{EndpointEntry, PatternSegment};

/// Linear scan over every entry. Among entries whose method and segments
/// match, the winner is the one that is literal at the earliest position
/// where candidates differ.
pub fn linear_lookup<'a>(entries: &'a [EndpointEntry], method: &str, segments: &[String]) -> Option<&'a EndpointEntry> {
    let mut best: Option<(&EndpointEntry, Vec<bool>)> = None;
    for entry in entries {
        if entry.method != method || entry.segments.len() != segments.len() {
            continue;
        }
        let mut literal_mask = Vec::with_capacity(segments.len());
        let mut matched = true;
        for (pattern, seg) in entry.segments.iter().zip(segments) {
            match pattern {
                PatternSegment::Literal(lit) => {
                    if lit != seg {
                        matched = false;
                        break;
                    }
                    literal_mask.push(true);
                }
                PatternSegment::Placeholder(_) => {
                    if seg.is_empty() {
                        matched = false;
                        break;
                    }
                    literal_mask.push(false);
                }
            }
        }
        if !matched {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, mask)) => literal_mask > *mask,
        };
        if better {
            best = Some((entry, literal_mask));
        }
    }
    best.map(|(e, _)| e)
}
