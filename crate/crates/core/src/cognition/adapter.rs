use super::{Cognition, OraclePolicy, Proposal, META_DIRECTIVES};
use crate::canonical::canonical_string;
use crate::mem::StateView;
use crate::scenarios::Rules;

/// What a transport sees: the rendered prompt and the view it was built from.
pub struct AdapterRequest<'a> {
    pub prompt: &'a str,
    pub state: &'a StateView,
}

/// Backend that turns a prompt into raw model text.
pub trait Transport: Send {
    fn complete(&mut self, request: &AdapterRequest<'_>) -> Result<String, String>;
}

/// Replays fixed responses in order, repeating the last one.
#[derive(Clone, Debug)]
pub struct CannedTransport {
    responses: Vec<String>,
    next: usize,
}

impl CannedTransport {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            responses: responses.into_iter().map(Into::into).collect(),
            next: 0,
        }
    }
}

impl Transport for CannedTransport {
    fn complete(&mut self, _request: &AdapterRequest<'_>) -> Result<String, String> {
        let out = self
            .responses
            .get(self.next.min(self.responses.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| "no canned responses".to_string());
        self.next += 1;
        out
    }
}

/// Offline stand-in for a model: answers with the oracle's proposal as JSON.
#[derive(Clone, Debug)]
pub struct OracleTransport {
    oracle: OraclePolicy,
}

impl OracleTransport {
    pub fn new(rules: Rules) -> Self {
        Self {
            oracle: OraclePolicy::new(rules),
        }
    }
}

impl Transport for OracleTransport {
    fn complete(&mut self, request: &AdapterRequest<'_>) -> Result<String, String> {
        serde_json::to_string(&self.oracle.propose(request.state)).map_err(|e| e.to_string())
    }
}

/// Cognition backed by a text model behind a [`Transport`].
pub struct AdapterPolicy<T: Transport> {
    transport: T,
}

impl<T: Transport> AdapterPolicy<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }

    pub fn render_prompt(state: &StateView) -> String {
        format!("{META_DIRECTIVES}\n\nSTATE:\n{}\n", canonical_string(state))
    }

    /// Accepts a bare JSON object, optionally wrapped in a code fence or prose.
    pub fn parse_response(raw: &str) -> Result<Proposal, String> {
        let start = raw.find('{').ok_or("no JSON object in response")?;
        let end = raw.rfind('}').ok_or("no JSON object in response")?;
        if end < start {
            return Err("no JSON object in response".into());
        }
        let p: Proposal = serde_json::from_str(&raw[start..=end]).map_err(|e| e.to_string())?;
        p.validate()?;
        Ok(p)
    }
}

fn failed(reason: String) -> Proposal {
    let mut p = Proposal::query("could not parse a proposal");
    p.failure = Some(reason);
    p.confidence = 0.0;
    p
}

impl<T: Transport> Cognition for AdapterPolicy<T> {
    fn name(&self) -> &'static str {
        "adapter"
    }

    fn propose(&mut self, state: &StateView) -> Proposal {
        let prompt = Self::render_prompt(state);
        let request = AdapterRequest { prompt: &prompt, state };
        match self.transport.complete(&request) {
            Ok(raw) => Self::parse_response(&raw).unwrap_or_else(failed),
            Err(e) => failed(format!("transport error: {e}")),
        }
    }
}
