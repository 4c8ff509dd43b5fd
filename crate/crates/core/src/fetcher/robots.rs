//! Robots exclusion rules: user-agent groups, longest-match Allow/Disallow with
//! `*` and `$` wildcards.

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rule {
    allow: bool,
    pattern: String,
}

#[derive(Debug, Clone, Default)]
struct Group {
    agents: Vec<String>,
    rules: Vec<Rule>,
}

#[derive(Debug, Clone, Default)]
pub struct RobotsTxt {
    groups: Vec<Group>,
}

impl RobotsTxt {
    pub fn parse(body: &str) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        let mut current: Option<Group> = None;
        let mut last_was_agent = false;
        for line in body.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if !last_was_agent {
                        if let Some(g) = current.take() {
                            groups.push(g);
                        }
                        current = Some(Group::default());
                    }
                    if let Some(g) = current.as_mut() {
                        g.agents.push(value.to_ascii_lowercase());
                    }
                    last_was_agent = true;
                }
                "allow" | "disallow" => {
                    last_was_agent = false;
                    // Empty Disallow means "nothing disallowed".
                    if let (Some(g), false) = (current.as_mut(), value.is_empty()) {
                        g.rules.push(Rule {
                            allow: key == "allow",
                            pattern: value.to_string(),
                        });
                    }
                }
                _ => last_was_agent = false,
            }
        }
        groups.extend(current);
        RobotsTxt { groups }
    }

    /// Whether `agent` (a product token such as `scrapeflow`) may fetch `path`,
    /// which should include any query string.
    pub fn is_allowed(&self, agent: &str, path: &str) -> bool {
        if path == "/robots.txt" {
            return true;
        }
        let agent = agent.to_ascii_lowercase();
        let mut rules: Vec<&Rule> = self
            .groups
            .iter()
            .filter(|g| g.agents.contains(&agent))
            .flat_map(|g| &g.rules)
            .collect();
        if rules.is_empty() && !self.groups.iter().any(|g| g.agents.contains(&agent)) {
            rules = self
                .groups
                .iter()
                .filter(|g| g.agents.iter().any(|a| a == "*"))
                .flat_map(|g| &g.rules)
                .collect();
        }
        let mut best: Option<(usize, bool)> = None;
        for rule in rules {
            if pattern_matches(&rule.pattern, path) {
                let len = rule.pattern.len();
                best = match best {
                    Some((l, allow)) if l > len || (l == len && allow) => Some((l, allow)),
                    _ => Some((len, rule.allow)),
                };
            }
        }
        best.is_none_or(|(_, allow)| allow)
    }
}

/// Prefix match with `*` (any run) and a trailing `$` (end anchor).
fn pattern_matches(pattern: &str, path: &str) -> bool {
    let (pattern, anchored) = match pattern.strip_suffix('$') {
        Some(p) => (p, true),
        None => (pattern, false),
    };
    let pat = pattern.as_bytes();
    let text = path.as_bytes();
    // positions in `text` reachable after consuming a prefix of `pat`
    let mut reach = vec![false; text.len() + 1];
    reach[0] = true;
    for &p in pat {
        let mut next = vec![false; text.len() + 1];
        if p == b'*' {
            let mut seen = false;
            for i in 0..=text.len() {
                seen |= reach[i];
                next[i] = seen;
            }
        } else {
            for i in 0..text.len() {
                if reach[i] && text[i] == p {
                    next[i + 1] = true;
                }
            }
        }
        reach = next;
    }
    if anchored {
        reach[text.len()]
    } else {
        reach.iter().any(|&r| r)
    }
}
