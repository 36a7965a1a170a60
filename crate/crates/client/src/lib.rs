//! Async client for the characterization service.

use futures_util::{SinkExt, StreamExt};
use paretohil_core::api::*;
use paretohil_core::protocol::{from_jsonl, SessionLog};
use paretohil_core::wire::{ClientMsg, ServerMsg};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),

    #[error("server returned {status}: {}", body.error)]
    Api { status: u16, body: ApiError },

    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),

    #[error("bad payload: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] paretohil_core::Error),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if !status.is_success() {
            let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ApiError {
                error: String::from_utf8_lossy(&bytes).into_owned(),
                kind: "http".into(),
            });
            return Err(ClientError::Api { status: status.as_u16(), body });
        }
        Ok(serde_json::from_slice(&bytes)?)
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::decode(self.http.post(self.url(path)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<()> {
        let resp = self.http.get(self.url("/health")).send().await?;
        resp.error_for_status()?;
        Ok(())
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionStatus> {
        self.post("/sessions", req).await
    }

    pub async fn sessions(&self) -> Result<Vec<SessionStatus>> {
        self.get("/sessions").await
    }

    pub async fn session(&self, id: &str) -> Result<SessionStatus> {
        self.get(&format!("/sessions/{id}")).await
    }

    /// Starts the next phase; with `wait` the call returns once it is done.
    pub async fn advance(&self, id: &str, wait: bool) -> Result<AdvanceResponse> {
        self.post(&format!("/sessions/{id}/advance?wait={wait}"), &()).await
    }

    pub async fn models(&self, id: &str) -> Result<ModelsView> {
        self.get(&format!("/sessions/{id}/models")).await
    }

    pub async fn log_text(&self, id: &str) -> Result<String> {
        let resp = self.http.get(self.url(&format!("/sessions/{id}/log"))).send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        if !status.is_success() {
            let body = serde_json::from_str(&text).unwrap_or(ApiError { error: text, kind: "http".into() });
            return Err(ClientError::Api { status: status.as_u16(), body });
        }
        Ok(text)
    }

    pub async fn log(&self, id: &str) -> Result<SessionLog> {
        Ok(from_jsonl(self.log_text(id).await?.as_bytes())?)
    }

    /// Advances phase by phase until the protocol finishes or fails.
    pub async fn run_to_end(&self, id: &str, mut on_phase: impl FnMut(&AdvanceResponse)) -> Result<SessionLog> {
        loop {
            let status = self.session(id).await?;
            if status.finished {
                return self.log(id).await;
            }
            let r = self.advance(id, true).await?;
            on_phase(&r);
        }
    }

    pub async fn characterize(&self, req: &CharacterizeRequest) -> Result<CharacterizeResponse> {
        self.post("/characterizations", req).await
    }

    pub async fn connect(&self, id: &str) -> Result<SessionSocket> {
        let ws_base = if let Some(rest) = self.base.strip_prefix("https://") {
            format!("wss://{rest}")
        } else if let Some(rest) = self.base.strip_prefix("http://") {
            format!("ws://{rest}")
        } else {
            self.base.clone()
        };
        let (ws, _) = tokio_tungstenite::connect_async(format!("{ws_base}/sessions/{id}/ws")).await?;
        Ok(SessionSocket { ws })
    }
}

/// The live channel of one session.
pub struct SessionSocket {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl SessionSocket {
    /// Next server message; `None` once the socket is closed.
    pub async fn recv(&mut self) -> Option<Result<ServerMsg>> {
        loop {
            match self.ws.next().await? {
                Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).map_err(Into::into)),
                Ok(Message::Close(_)) => return None,
                Ok(_) => continue,
                Err(e) => return Some(Err(e.into())),
            }
        }
    }

    pub async fn send(&mut self, msg: &ClientMsg) -> Result<()> {
        let text = serde_json::to_string(msg)?;
        self.ws.send(Message::Text(text.into())).await?;
        Ok(())
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
