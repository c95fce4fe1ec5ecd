"""The nearline decision path.

decide(): read the user's buffered sequence, drop history from other model
versions, predict the return quantiles from [history, current state], derive
the RTG prompt (learned / constant / manual mode), predict the eligible
action conditioned on the prompt, and write the new timestep back to the
store. Rewards that arrive between decisions are buffered and merged into
the *next written* record (so realized outcomes live one slot later than at
training time; flags record which components are realized).
"""

import json
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..dtmodel import DecisionTransformer, HistoryStep
from ..dtmodel.config import (
    ACTIONS,
    N_ACTIONS,
    REWARD_AGGREGATION,
    REWARD_NAMES,
    REWARD_REALIZED,
)
from ..pipeline import manual_prompt
from ..seqstore import SequenceStore, SlotRecord, StoreError, apply_history_mask
from ..seqstore.snapshot import load_snapshot, save_snapshot
from .quantiles import interpolate_quantile, sort_quantile_rows

MODES = ("learned", "constant", "manual")


class ServiceError(ValueError):
    pass


@dataclass
class DecisionRequest:
    user_id: str
    state: np.ndarray
    eas: np.ndarray                  # (3,) 0/1
    timestamp_ms: int
    mode: str | None = None          # None -> service default
    alphas: np.ndarray | None = None  # per-reward target levels (learned mode)
    rtg_override: np.ndarray | None = None


@dataclass
class DecisionResponse:
    action: int
    action_name: str
    probs: np.ndarray                # (3,), zero on ineligible actions
    prompt: np.ndarray               # (n_r,)
    quantiles: np.ndarray            # (n_r, M), rows sorted
    history_len: int
    store_write_ok: bool
    store_slot: int | None
    mode: str

    def to_wire(self):
        return {
            "action": self.action_name,
            "action_index": self.action,
            "probs": [round(float(p), 9) for p in self.probs],
            "prompt": [round(float(x), 9) for x in self.prompt],
            "quantiles": [[round(float(x), 9) for x in row] for row in self.quantiles],
            "history_len": self.history_len,
            "store_write_ok": self.store_write_ok,
            "mode": self.mode,
        }


@dataclass
class _PendingRewards:
    values: dict = field(default_factory=dict)   # component index -> value
    realized: dict = field(default_factory=dict)


class DecisionService:
    def __init__(
        self,
        model: DecisionTransformer,
        store: SequenceStore,
        *,
        model_key,
        mode="learned",
        default_alphas=None,
        constant_prompt=None,
        manual_start=None,
    ):
        if mode not in MODES:
            raise ServiceError(f"unknown prompt mode {mode!r}")
        self.model = model
        self.store = store
        self.model_key = str(model_key)
        self.mode = mode
        nr = model.cfg.n_rewards
        self.default_alphas = (
            np.full(nr, 0.7) if default_alphas is None
            else np.asarray(default_alphas, dtype=np.float64)
        )
        self.constant_prompt = (
            None if constant_prompt is None
            else np.asarray(constant_prompt, dtype=np.float64)
        )
        self.manual_start = (
            None if manual_start is None
            else np.asarray(manual_start, dtype=np.float64)
        )
        self._pending = {}
        self._observed = {}          # per-user realized reward sums (manual mode)
        self._lock = threading.Lock()
        self.decisions = 0
        self.write_failures = 0
        self.quantile_crossings = 0
        self.latencies_ms = []
        self.prompt_log = []         # per-decision prompts, for sweep statistics

    # -- record codec --------------------------------------------------------

    def _encode_record(self, state, prompt, reward, realized_bits, action, eas,
                       seq_no, timestamp_ms):
        floats = np.concatenate([state, prompt, reward])
        eas_bits = int(sum(int(e) << i for i, e in enumerate(eas)))
        longs = (int(action), eas_bits, int(realized_bits), int(seq_no))
        return SlotRecord.make(floats, longs, (self.model_key,), timestamp_ms)

    def _decode_record(self, rec):
        d = self.model.cfg.state_dim
        nr = self.model.cfg.n_rewards
        floats = np.asarray(rec.floats, dtype=np.float64)
        if floats.shape[0] != d + 2 * nr:
            raise ServiceError(
                f"buffer record has {floats.shape[0]} floats; "
                f"expected {d + 2 * nr} (state {d} + prompt/reward {2 * nr})"
            )
        return HistoryStep(
            state=floats[:d],
            rtg=floats[d : d + nr],
            action=int(rec.longs[0]),
            reward=floats[d + nr :],
        )

    # -- reward ingestion ----------------------------------------------------

    def ingest_external_reward(self, user_id, updates, realized=None):
        """Buffer late-arriving reward components for the next written record.

        updates maps component name (or index) to a value; aggregation
        follows REWARD_AGGREGATION (visits sum, the rest replace).
        """
        with self._lock:
            pending = self._pending.setdefault(user_id, _PendingRewards())
            for key, value in updates.items():
                if isinstance(key, str):
                    if key not in REWARD_NAMES:
                        raise ServiceError(f"unknown reward component {key!r}")
                    idx = REWARD_NAMES.index(key)
                else:
                    idx = int(key)
                if not 0 <= idx < self.model.cfg.n_rewards:
                    raise ServiceError(f"unknown reward component {key!r}")
                value = float(value)
                if REWARD_AGGREGATION[idx] == "sum" and idx in pending.values:
                    pending.values[idx] += value
                else:
                    pending.values[idx] = value
                flag = REWARD_REALIZED[idx] if realized is None else int(realized[idx])
                pending.realized[idx] = flag
                if flag:
                    obs = self._observed.setdefault(
                        user_id, np.zeros(self.model.cfg.n_rewards)
                    )
                    obs[idx] += value

    def _take_pending(self, user_id):
        with self._lock:
            pending = self._pending.pop(user_id, None)
        nr = self.model.cfg.n_rewards
        reward = np.zeros(nr)
        bits = 0
        if pending:
            for idx, value in pending.values.items():
                reward[idx] = value
                if pending.realized.get(idx):
                    bits |= 1 << idx
        return reward, bits

    # -- the decision path ---------------------------------------------------

    def history_for(self, user_id):
        records = self.store.read_sequence(
            user_id, max_len=self.model.cfg.context_len - 1
        )
        usable = apply_history_mask(records, self.model_key)
        return [self._decode_record(r) for r in usable]

    def _prompt(self, request, qmat):
        mode = request.mode or self.mode
        if mode not in MODES:
            raise ServiceError(f"unknown prompt mode {mode!r}")
        if request.rtg_override is not None:
            return np.asarray(request.rtg_override, dtype=np.float64), mode
        if mode == "learned":
            alphas = (
                self.default_alphas if request.alphas is None
                else np.asarray(request.alphas, dtype=np.float64)
            )
            return interpolate_quantile(qmat, self.model.cfg.grid, alphas), mode
        if mode == "constant":
            if self.constant_prompt is None:
                raise ServiceError("constant mode requires a cohort prompt")
            return self.constant_prompt.copy(), mode
        if self.manual_start is None:
            raise ServiceError("manual mode requires a starting trajectory return")
        observed = self._observed.get(request.user_id)
        if observed is None:
            return self.manual_start.copy(), mode
        return manual_prompt(self.manual_start, observed.reshape(1, -1)), mode

    def decide(self, request) -> DecisionResponse:
        t0 = time.perf_counter()
        eas = np.asarray(request.eas, dtype=np.uint8).reshape(-1)
        if eas.shape[0] != N_ACTIONS or not eas.any():
            raise ServiceError("eligible action set must be a nonempty subset")
        state = np.asarray(request.state, dtype=np.float64).reshape(-1)
        if state.shape[0] != self.model.cfg.state_dim:
            raise ServiceError(
                f"state has {state.shape[0]} features; "
                f"model expects {self.model.cfg.state_dim}"
            )

        history = self.history_for(request.user_id)
        qmat_raw = self.model.quantiles_for_state(history, state)
        qmat, crossed = sort_quantile_rows(qmat_raw)
        if crossed:
            with self._lock:
                self.quantile_crossings += crossed
        prompt, mode = self._prompt(request, qmat)
        _, probs = self.model.action_for_state(history, state, prompt, eas)
        action = int(np.argmax(probs))

        reward, realized_bits = self._take_pending(request.user_id)
        seq_no = len(history)
        record = self._encode_record(
            state, prompt, reward, realized_bits, action, eas, seq_no,
            request.timestamp_ms,
        )
        write_ok, slot = True, None
        try:
            slot = self.store.write_partial(request.user_id, record)
        except StoreError:
            write_ok = False
            with self._lock:
                self.write_failures += 1

        with self._lock:
            self.decisions += 1
            self.prompt_log.append(prompt.copy())
            self.latencies_ms.append((time.perf_counter() - t0) * 1e3)
        return DecisionResponse(
            action=action,
            action_name=ACTIONS[action],
            probs=probs,
            prompt=prompt,
            quantiles=qmat,
            history_len=len(history),
            store_write_ok=write_ok,
            store_slot=slot,
            mode=mode,
        )

    # -- metrics and persistence ---------------------------------------------

    def metrics(self):
        lat = np.asarray(self.latencies_ms) if self.latencies_ms else np.zeros(1)
        return {
            "decisions": self.decisions,
            "p50_ms": round(float(np.percentile(lat, 50)), 3),
            "p99_ms": round(float(np.percentile(lat, 99)), 3),
            "store_occupancy": self.store.occupancy(),
            "write_failures": self.write_failures,
            "quantile_crossings": self.quantile_crossings,
            "model_key": self.model_key,
        }

    def save_state(self, dir_path):
        """Snapshot the store plus the pending/observed reward buffers."""
        os.makedirs(dir_path, exist_ok=True)
        save_snapshot(self.store, os.path.join(dir_path, "store.snap"))
        with self._lock:
            side = {
                "pending": {
                    uid: {
                        "values": {str(k): v for k, v in p.values.items()},
                        "realized": {str(k): v for k, v in p.realized.items()},
                    }
                    for uid, p in self._pending.items()
                },
                "observed": {uid: list(map(float, v))
                             for uid, v in self._observed.items()},
            }
        with open(os.path.join(dir_path, "pending.json"), "w") as fh:
            json.dump(side, fh, sort_keys=True)

    def load_state(self, dir_path):
        self.store = load_snapshot(os.path.join(dir_path, "store.snap"))
        with open(os.path.join(dir_path, "pending.json")) as fh:
            side = json.load(fh)
        with self._lock:
            self._pending = {
                uid: _PendingRewards(
                    values={int(k): v for k, v in p["values"].items()},
                    realized={int(k): v for k, v in p["realized"].items()},
                )
                for uid, p in side["pending"].items()
            }
            self._observed = {
                uid: np.asarray(v) for uid, v in side["observed"].items()
            }


class DTServicePolicy:
    """Rollout-protocol adapter: one decision service acting in the simulator.

    Feeds realized rewards back through ingest_external_reward after every
    environment step, exactly like the nearline flow.
    """

    def __init__(self, service: DecisionService, tick_ms=30 * 60_000,
                 alphas=None, mode=None):
        self.service = service
        self.tick_ms = int(tick_ms)
        self.alphas = None if alphas is None else np.asarray(alphas, dtype=np.float64)
        self.mode = mode
        self._ticks = {}

    def act(self, user_id, state, eas):
        tick = self._ticks.get(user_id, 0)
        self._ticks[user_id] = tick + 1
        response = self.service.decide(DecisionRequest(
            user_id=user_id,
            state=state,
            eas=eas,
            timestamp_ms=(tick + 1) * self.tick_ms,
            mode=self.mode,
            alphas=self.alphas,
        ))
        return response.action

    def observe(self, user_id, action, reward, info):
        updates = {name: float(reward[i]) for i, name in enumerate(REWARD_NAMES)}
        self.service.ingest_external_reward(
            user_id, updates, realized=info.get("realized")
        )
