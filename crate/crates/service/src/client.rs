//! Blocking client for the service, usable as an [`EpisodeDriver`].

use std::time::Duration;

use forge_core::env::{Action, Observation, RenderedView};
use forge_core::eval::driver::{DriverError, EpisodeDriver, EpisodeResult, EpisodeStart, StepOutcome};
use reqwest::blocking::{Client, RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::api::*;

pub struct HttpDriver {
    base: String,
    token: Option<String>,
    client: Client,
}

fn transport(e: reqwest::Error) -> DriverError {
    DriverError::Transport(e.to_string())
}

impl HttpDriver {
    pub fn new(base_url: &str, token: Option<String>) -> Result<Self, DriverError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(transport)?;
        Ok(HttpDriver {
            base: base_url.trim_end_matches('/').to_string(),
            token,
            client,
        })
    }

    fn req(&self, r: RequestBuilder) -> RequestBuilder {
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, DriverError> {
        let status = resp.status();
        if status.is_success() {
            return resp
                .json()
                .map_err(|e| DriverError::Internal(format!("bad response body: {e}")));
        }
        let msg = resp
            .json::<ApiError>()
            .map(|e| e.message)
            .unwrap_or_else(|_| status.to_string());
        Err(match status.as_u16() {
            404 => DriverError::NotFound(msg),
            409 => DriverError::Conflict,
            400 => DriverError::BadRequest(msg),
            401 => DriverError::BadRequest(format!("unauthorized: {msg}")),
            _ => DriverError::Internal(msg),
        })
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, DriverError> {
        let r = self.req(self.client.get(format!("{}{path}", self.base)));
        Self::decode(r.send().map_err(transport)?)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, DriverError> {
        let r = self.req(self.client.post(format!("{}{path}", self.base)).json(body));
        Self::decode(r.send().map_err(transport)?)
    }

    pub fn bytes(&self, path: &str) -> Result<Vec<u8>, DriverError> {
        let resp = self
            .req(self.client.get(format!("{}{path}", self.base)))
            .send()
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Self::decode::<()>(resp).map(|_| Vec::new());
        }
        resp.bytes().map(|b| b.to_vec()).map_err(transport)
    }

    pub fn instances(&self) -> Result<InstanceList, DriverError> {
        self.get("/instances")
    }

    pub fn instance(&self, id: &str) -> Result<InstanceDetail, DriverError> {
        self.get(&format!("/instances/{id}"))
    }

    pub fn calibrate(&self, req: &CalibrationRequest) -> Result<CalibrationResponse, DriverError> {
        self.post("/calibration", req)
    }

    pub fn piece_preview(
        &self,
        instance_id: &str,
        color: &str,
        rotation: usize,
    ) -> Result<Vec<u8>, DriverError> {
        self.bytes(&format!(
            "/instances/{instance_id}/pieces/{color}/preview?rotation={rotation}"
        ))
    }

    pub fn observation(&self, episode_id: &str) -> Result<Observation, DriverError> {
        let wire: WireObservation = self.get(&format!("/episodes/{episode_id}/observation"))?;
        self.resolve(wire)
    }

    /// Fetches the referenced images and checks them against their hashes.
    pub fn resolve(&self, wire: WireObservation) -> Result<Observation, DriverError> {
        let mut views = Vec::with_capacity(wire.views.len());
        for v in wire.views {
            let png = self.bytes(&v.url)?;
            if hex::encode(Sha256::digest(&png)) != v.sha256 {
                return Err(DriverError::Internal(format!(
                    "image {} does not match its hash",
                    v.url
                )));
            }
            views.push(RenderedView { name: v.name, png });
        }
        Ok(Observation {
            schema_version: wire.schema_version,
            views,
            text_grid: wire.text_grid,
            color_map: wire.color_map,
            remaining: wire.remaining,
            steps_taken: wire.steps_taken,
            steps_left: wire.steps_left,
            status: wire.status,
            box_dims: wire.box_dims,
        })
    }
}

impl EpisodeDriver for HttpDriver {
    fn create(&mut self, instance_id: &str, budget: Option<u32>) -> Result<EpisodeStart, DriverError> {
        let created: CreatedEpisode = self.post(
            "/episodes",
            &CreateEpisode {
                instance_id: instance_id.to_string(),
                budget,
            },
        )?;
        Ok(EpisodeStart {
            episode_id: created.handle.episode_id,
            budget: created.handle.budget,
            observation: self.resolve(created.observation)?,
        })
    }

    fn step(&mut self, episode_id: &str, action: &Action) -> Result<StepOutcome, DriverError> {
        let resp: StepResponse = self.post(&format!("/episodes/{episode_id}/actions"), action)?;
        Ok(StepOutcome {
            result: resp.result,
            observation: self.resolve(resp.observation)?,
        })
    }

    fn result(&mut self, episode_id: &str) -> Result<EpisodeResult, DriverError> {
        self.get(&format!("/episodes/{episode_id}/result"))
    }
}
