"""Per-user notification environment with latent engagement and fatigue.

Every (user, tick) consumes a fixed set of counter-based random draws, so
two policies rolled out under the same seed face identical candidates,
eligibility sets, and click/visit noise: paired comparison by construction.
"""

import numpy as np

from ..dtmodel.config import DONT_SEND, REWARD_REALIZED, SEND_BADGE, SEND_PUSH
from .config import FEATURE_INDEX, STATE_DIM, SimConfig

MS_PER_MINUTE = 60_000
# sub-tick page view offsets of one visit burst, in minutes
VIEW_BURST_MINUTES = (0, 5, 12)

# reward vector layout, matching dtmodel.config.REWARD_NAMES
R_CLICK, R_VISIT, R_PENALTY = 0, 1, 2


class IneligibleActionError(ValueError):
    pass


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def tick_draws(seed, user_idx, tick):
    """Six U(0,1) draws for (quality, eas, click, visit, explore, pick)."""
    ss = np.random.SeedSequence((int(seed), int(user_idx), int(tick) + 1))
    state = ss.generate_state(6, np.uint64)
    return state.astype(np.float64) / float(2**64)


def user_draws(seed, user_idx):
    ss = np.random.SeedSequence((int(seed), int(user_idx), 0))
    state = ss.generate_state(2, np.uint64)
    return state.astype(np.float64) / float(2**64)


class _UserRuntime:
    __slots__ = (
        "index", "engagement", "fatigue", "tick", "last_visit_tick", "visits",
        "send_history", "page_views", "clicks", "sends_badge", "sends_push",
        "quality", "eas", "draws",
    )

    def __init__(self, index, engagement, cap):
        self.index = index
        self.engagement = engagement
        self.fatigue = 0.0
        self.tick = 0
        self.last_visit_tick = -cap
        self.visits = 0
        self.send_history = []   # per tick: 0 none, 1 badge, 2 push
        self.page_views = []     # ms timestamps
        self.clicks = 0
        self.sends_badge = 0
        self.sends_push = 0
        self.quality = 0.0
        self.eas = None
        self.draws = None


class SimEnv:
    def __init__(self, cfg: SimConfig, n_users, seed, user_prefix="u"):
        self.cfg = cfg
        self.seed = int(seed)
        width = max(4, len(str(max(1, n_users - 1))))
        self._ids = [f"{user_prefix}{i:0{width}d}" for i in range(n_users)]
        self.users = {}
        for i, uid in enumerate(self._ids):
            ud = user_draws(self.seed, i)
            engagement = cfg.engagement_low + ud[0] * (
                cfg.engagement_high - cfg.engagement_low
            )
            self.users[uid] = _UserRuntime(i, engagement, cfg.visit_gap_cap)
        for uid in self._ids:
            self._draw_candidate(self.users[uid])

    def user_ids(self):
        return list(self._ids)

    # -- per-tick candidate and state ---------------------------------------

    def _draw_candidate(self, u):
        u.draws = tick_draws(self.seed, u.index, u.tick)
        s = self.cfg.quality_shape
        if s > 0:
            u.quality = float(
                0.5 * (1.0 + np.tanh(s * (u.draws[0] - 0.5)) / np.tanh(s / 2.0))
            )
        else:
            u.quality = float(u.draws[0])
        u_eas = u.draws[1]
        eas = np.ones(3, dtype=np.uint8)
        if u_eas >= self.cfg.p_full_eas:
            if u_eas < self.cfg.p_full_eas + self.cfg.p_no_push:
                eas[SEND_PUSH] = 0
            else:
                eas[SEND_BADGE] = 0
        u.eas = eas

    def current_quality(self, user_id):
        return self.users[user_id].quality

    def current_eas(self, user_id):
        return self.users[user_id].eas.copy()

    def exploration_draws(self, user_id):
        """The (explore, pick) uniforms reserved for a behavior policy."""
        d = self.users[user_id].draws
        return float(d[4]), float(d[5])

    def recent_send_count(self, user_id, window):
        hist = self.users[user_id].send_history[-window:] if window else []
        return sum(1 for h in hist if h != 0)

    def now_ms(self, user_id):
        return self.users[user_id].tick * self.cfg.tick_minutes * MS_PER_MINUTE

    def current_state(self, user_id):
        u = self.users[user_id]
        cfg = self.cfg
        w = cfg.obs_send_window
        hist = u.send_history[-w:]
        state = np.zeros(STATE_DIM, dtype=np.float64)
        state[FEATURE_INDEX["quality"]] = u.quality
        state[FEATURE_INDEX["badge_sends_recent"]] = sum(1 for h in hist if h == 1) / w
        state[FEATURE_INDEX["push_sends_recent"]] = sum(1 for h in hist if h == 2) / w
        gap = min(u.tick - u.last_visit_tick, cfg.visit_gap_cap)
        state[FEATURE_INDEX["ticks_since_visit"]] = gap / cfg.visit_gap_cap
        state[FEATURE_INDEX["visit_rate"]] = (u.visits + 0.5) / (u.tick + 1)
        state[FEATURE_INDEX["bias"]] = 1.0
        return state

    # -- dynamics ------------------------------------------------------------

    def click_probability(self, quality, fatigue, action):
        cfg = self.cfg
        if action == SEND_PUSH:
            return float(_sigmoid(
                cfg.click_bias_push + cfg.click_quality_push * quality
                - cfg.click_fatigue_push * fatigue
            ))
        if action == SEND_BADGE:
            return float(_sigmoid(
                cfg.click_bias_badge + cfg.click_quality_badge * quality
                - cfg.click_fatigue_badge * fatigue
            ))
        return 0.0

    def step(self, user_id, action):
        """Apply the action, advance one tick; returns (reward, info).

        Reward layout: [predicted click value for the taken channel, visit
        indicator for the gap after the action, volume penalty scaling with
        post-send fatigue].
        """
        u = self.users[user_id]
        cfg = self.cfg
        action = int(action)
        if not u.eas[action]:
            raise IneligibleActionError(
                f"action {action} not eligible for {user_id} at tick {u.tick}"
            )
        _, _, u_click, u_visit, _, _ = u.draws
        now = self.now_ms(user_id)

        reward = np.zeros(3, dtype=np.float64)
        clicked = False
        if action == DONT_SEND:
            u.send_history.append(0)
        else:
            p_click = self.click_probability(u.quality, u.fatigue, action)
            clicked = bool(u_click < p_click)
            reward[R_CLICK] = p_click - cfg.click_cost
            if action == SEND_PUSH:
                u.fatigue += cfg.fatigue_push
                u.sends_push += 1
                u.send_history.append(2)
            else:
                u.fatigue += cfg.fatigue_badge
                u.sends_badge += 1
                u.send_history.append(1)
            reward[R_PENALTY] = -cfg.penalty_scale * u.fatigue
            if clicked:
                u.clicks += 1

        p_organic = _sigmoid(
            cfg.visit_bias + cfg.visit_engagement * u.engagement
            - cfg.visit_fatigue * u.fatigue
        )
        visited = clicked or bool(u_visit < p_organic)
        if visited:
            for off in VIEW_BURST_MINUTES:
                u.page_views.append(now + off * MS_PER_MINUTE)
            u.visits += 1
            u.last_visit_tick = u.tick
        reward[R_VISIT] = 1.0 if visited else 0.0

        u.fatigue *= cfg.fatigue_decay
        u.tick += 1
        self._draw_candidate(u)
        info = {
            "clicked": clicked,
            "visited": visited,
            "fatigue": u.fatigue,
            "realized": np.asarray(REWARD_REALIZED, dtype=np.uint8),
        }
        return self.current_state(user_id), reward, info
