use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use hsal_core::Model;

use crate::dataset::{self, Dataset};
use crate::error::ApiError;
use crate::session::{self, Event, Session};

pub type SessionHandle = Arc<RwLock<Session>>;
type DatasetKey = (String, Option<usize>);
type ModelKey = (String, Option<usize>, u32);

/// Shared server state: datasets and models are loaded once and shared by sessions.
pub struct AppState {
    pub root: PathBuf,
    pub sessions_dir: PathBuf,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    datasets: Mutex<HashMap<DatasetKey, Arc<Dataset>>>,
    models: Mutex<HashMap<ModelKey, Arc<Model>>>,
}

impl AppState {
    /// Opens the artifacts root and replays every session log under `<root>/.sessions`.
    pub fn open(root: impl AsRef<Path>) -> std::io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        let sessions_dir = root.join(".sessions");
        std::fs::create_dir_all(&sessions_dir)?;
        let state = Self {
            root,
            sessions_dir,
            sessions: RwLock::new(HashMap::new()),
            datasets: Mutex::new(HashMap::new()),
            models: Mutex::new(HashMap::new()),
        };
        state.restore()?;
        Ok(state)
    }

    fn restore(&self) -> std::io::Result<()> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match self.restore_one(&path) {
                Ok(id) => log::info!("restored session {id}"),
                Err(e) => log::warn!("skipping session log {}: {e}", path.display()),
            }
        }
        Ok(())
    }

    fn restore_one(&self, path: &Path) -> Result<String, String> {
        let events = session::read_log(path)?;
        let Some((Event::Created { id, dataset, t, num_classes }, rest)) = events.split_first() else {
            return Err("log does not start with a created event".into());
        };
        if session::log_path(&self.sessions_dir, id) != path {
            return Err(format!("log name does not match session id {id}"));
        }
        let mut session = self.build(id.clone(), dataset, *t, *num_classes).map_err(|e| e.to_string())?;
        session.replay(rest).map_err(|e| e.to_string())?;
        session.attach_log(path, false).map_err(|e| e.to_string())?;
        self.sessions.write().unwrap().insert(id.clone(), Arc::new(RwLock::new(session)));
        Ok(id.clone())
    }

    fn dataset(&self, name: &str, num_classes: Option<usize>) -> Result<Arc<Dataset>, ApiError> {
        let key = (name.to_string(), num_classes);
        if let Some(d) = self.datasets.lock().unwrap().get(&key) {
            return Ok(d.clone());
        }
        let loaded = Arc::new(dataset::load(&self.root, name, num_classes)?);
        Ok(self.datasets.lock().unwrap().entry(key).or_insert(loaded).clone())
    }

    fn model(&self, dataset: &Arc<Dataset>, num_classes: Option<usize>, t: u32) -> Result<Arc<Model>, ApiError> {
        let key = (dataset.name.clone(), num_classes, t);
        if let Some(m) = self.models.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let model = Arc::new(dataset.model(t)?);
        Ok(self.models.lock().unwrap().entry(key).or_insert(model).clone())
    }

    fn build(&self, id: String, name: &str, t: u32, num_classes: Option<usize>) -> Result<Session, ApiError> {
        let dataset = self.dataset(name, num_classes)?;
        let model = self.model(&dataset, num_classes, t)?;
        Ok(Session::new(id, dataset, model, t, num_classes))
    }

    /// Creates a session; `t` defaults to the diffusion time stored in the artifact.
    pub fn create(&self, name: &str, t: Option<u32>, num_classes: Option<usize>) -> Result<SessionHandle, ApiError> {
        let t = match t {
            Some(0) => return Err(ApiError::unprocessable("t must be >= 1")),
            Some(t) => t,
            None => self.dataset(name, num_classes)?.artifact.manifest.t,
        };
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut session = self.build(id.clone(), name, t, num_classes)?;
        session.attach_log(&session::log_path(&self.sessions_dir, &id), true)?;
        let handle = Arc::new(RwLock::new(session));
        self.sessions.write().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    pub fn list(&self) -> Vec<SessionHandle> {
        let sessions = self.sessions.read().unwrap();
        let mut ids: Vec<&String> = sessions.keys().collect();
        ids.sort();
        ids.into_iter().map(|id| sessions[id].clone()).collect()
    }

    /// Dataset directories that hold a graph artifact.
    pub fn dataset_names(&self) -> Vec<String> {
        let Ok(entries) = std::fs::read_dir(&self.root) else { return Vec::new() };
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("graph").join(hsal_core::artifact::MANIFEST).exists())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| dataset::valid_name(n))
            .collect();
        names.sort();
        names
    }
}
