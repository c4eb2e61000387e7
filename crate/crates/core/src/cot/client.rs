//! Text-generation clients: a deterministic offline mock and a JSON-over-HTTP
//! remote client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::Category;
use crate::error::{Error, Result};
use crate::rng::stream_id;

pub const ENDPOINT_ENV: &str = "UMFDET_GEN_ENDPOINT";
pub const TOKEN_ENV: &str = "UMFDET_GEN_TOKEN";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_RETRIES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenTask {
    Cot,
    Rewrite,
}

/// Structured side information about the request. Remote services only see
/// the prompt; the mock uses this to fill its templates.
#[derive(Clone, Debug, PartialEq)]
pub struct GenContext {
    pub task: GenTask,
    pub sample_id: String,
    pub title: String,
    pub label: Option<Category>,
    pub entities: Vec<String>,
    pub attempt: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub context: Option<GenContext>,
}

pub trait GenClient: Send + Sync {
    /// Returns generated text. Content may be malformed; only transport
    /// problems are errors.
    fn generate(&self, req: &GenRequest) -> Result<String>;
}

impl<C: GenClient + ?Sized> GenClient for &C {
    fn generate(&self, req: &GenRequest) -> Result<String> {
        (**self).generate(req)
    }
}

impl<C: GenClient + ?Sized> GenClient for Box<C> {
    fn generate(&self, req: &GenRequest) -> Result<String> {
        (**self).generate(req)
    }
}

/// Deterministic template filler. `malformed_attempts` makes the first N
/// attempts of every sample return output that fails the schema, which is
/// handy for exercising regeneration.
#[derive(Clone, Debug, Default)]
pub struct MockClient {
    pub malformed_attempts: usize,
}

const COT_REAL: &[(&str, &str)] = &[
    (
        "The photo shows an ordinary scene with natural light and consistent shadows [image].",
        "The title reports {E} in plain factual wording that matches the picture [text].",
    ),
    (
        "The picture has clean edges and no visible editing traces [image].",
        "The headline about {E} is neutral and consistent with what the photo shows [text].",
    ),
];

const COT_HUMAN: &[(&str, &str)] = &[
    (
        "The photo looks authentic but shows nothing that supports the claim [image].",
        "The title uses sensational wording about {E} that the picture does not back up [text].",
    ),
    (
        "The image is a plain camera shot without generation artifacts [image].",
        "The headline exaggerates the story about {E} with emotional framing typical of a rumor [text].",
    ),
];

const COT_AI: &[(&str, &str)] = &[
    (
        "The image shows a regular grid of texture artifacts typical of generated pixels [image].",
        "The title about {E} reads like a machine rewrite with distorted keywords [text].",
    ),
    (
        "Fine periodic patterns cover the picture and suggest synthetic rendering [image].",
        "The wording around {E} looks altered by a generator rather than written by a reporter [text].",
    ),
];

const REWRITES_WITH_ENTITIES: &[&str] = &[
    "Officials deny everything as chaos spreads around {E}",
    "Secret report claims disaster was covered up near {E}",
    "Hidden footage reveals panic involving {E}",
];

const REWRITES_NO_ENTITIES: &[&str] = &[
    "Leaked documents reveal massive cover up",
    "Experts warn hidden danger spreads across town",
    "Unverified video shows shocking collapse downtown",
];

fn pick(sample_id: &str, attempt: usize, n: usize) -> usize {
    (stream_id(sample_id).wrapping_add(attempt as u64) % n as u64) as usize
}

impl MockClient {
    pub fn new() -> Self {
        MockClient::default()
    }

    fn cot(&self, ctx: &GenContext) -> Result<String> {
        let label = ctx
            .label
            .ok_or_else(|| Error::Config("mock CoT generation needs the sample label".into()))?;
        if ctx.attempt <= self.malformed_attempts {
            return Ok(format!("<think>unsure</think><answer>{}", label.as_str()));
        }
        let table = match label {
            Category::Real => COT_REAL,
            Category::HumanCrafted => COT_HUMAN,
            Category::AiSynthesized => COT_AI,
        };
        let (img, txt) = table[pick(&ctx.sample_id, 0, table.len())];
        let subject = ctx.entities.first().map(String::as_str).unwrap_or("the event");
        Ok(format!(
            "<think>{img} {}</think><answer>{}</answer>",
            txt.replace("{E}", subject),
            label.as_str()
        ))
    }

    fn rewrite(&self, ctx: &GenContext) -> String {
        if ctx.entities.is_empty() {
            let out = REWRITES_NO_ENTITIES[pick(&ctx.sample_id, ctx.attempt, REWRITES_NO_ENTITIES.len())];
            return out.to_string();
        }
        let t = REWRITES_WITH_ENTITIES[pick(&ctx.sample_id, ctx.attempt, REWRITES_WITH_ENTITIES.len())];
        t.replace("{E}", &ctx.entities.join(" and "))
    }
}

impl GenClient for MockClient {
    fn generate(&self, req: &GenRequest) -> Result<String> {
        let ctx = req
            .context
            .as_ref()
            .ok_or_else(|| Error::Config("mock client needs request context".into()))?;
        match ctx.task {
            GenTask::Cot => self.cot(ctx),
            GenTask::Rewrite => Ok(self.rewrite(ctx)),
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

#[derive(Clone, Debug)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
    pub retries: usize,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            model: None,
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(500),
        }
    }

    /// Endpoint from `UMFDET_GEN_ENDPOINT`, bearer token from `UMFDET_GEN_TOKEN`.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("{ENDPOINT_ENV} is not set")))?;
        let mut cfg = RemoteConfig::new(endpoint);
        cfg.token = std::env::var(TOKEN_ENV).ok();
        Ok(cfg)
    }
}

/// Client for a service accepting `{"prompt", "max_tokens"}` and answering
/// `{"text"}`. Transport failures are retried with exponential backoff.
pub struct RemoteClient {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        RemoteClient { cfg, agent }
    }

    fn once(&self, req: &GenRequest) -> std::result::Result<String, String> {
        let body = RemoteRequest {
            prompt: &req.prompt,
            max_tokens: req.max_tokens,
            model: self.cfg.model.as_deref(),
        };
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(t) = &self.cfg.token {
            call = call.header("Authorization", &format!("Bearer {t}"));
        }
        let resp = call.send_json(&body).map_err(|e| e.to_string())?;
        let parsed: RemoteResponse = resp.into_body().read_json().map_err(|e| e.to_string())?;
        Ok(parsed.text)
    }
}

impl GenClient for RemoteClient {
    fn generate(&self, req: &GenRequest) -> Result<String> {
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                std::thread::sleep(self.cfg.backoff * (1u32 << (attempt - 1)));
            }
            match self.once(req) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("generation request {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::Transport {
            attempts: self.cfg.retries + 1,
            reason: last,
        })
    }
}
