"""Generator parameters for the synthetic notification environment.

All knobs live in this one block so runs can pin the exact environment.
The built-in tension: sends can convert to clicks and visits, but every send
raises fatigue, which suppresses both future clicks and organic visits.
"""

from dataclasses import asdict, dataclass


STATE_FEATURES = (
    "quality",             # candidate notification quality score in (0, 1)
    "badge_sends_recent",  # badge sends in the last obs_send_window ticks / window
    "push_sends_recent",   # push sends in the last obs_send_window ticks / window
    "ticks_since_visit",   # capped at visit_gap_cap, normalized
    "visit_rate",          # smoothed historical visit rate
    "bias",                # constant 1.0
)
STATE_DIM = len(STATE_FEATURES)
FEATURE_INDEX = {name: i for i, name in enumerate(STATE_FEATURES)}


@dataclass(frozen=True)
class SimConfig:
    n_rewards: int = 3
    tick_minutes: int = 30

    # user latents
    engagement_low: float = 0.3
    engagement_high: float = 1.0

    # fatigue dynamics
    fatigue_decay: float = 0.85
    fatigue_push: float = 1.0
    fatigue_badge: float = 0.6

    # click model: sigmoid(bias + quality_coef * q - fatigue_coef * fatigue)
    click_bias_push: float = -1.5
    click_quality_push: float = 4.0
    click_fatigue_push: float = 0.7
    click_bias_badge: float = -2.0
    click_quality_badge: float = 3.4
    click_fatigue_badge: float = 0.4
    # the click-value reward is net of this send cost, so its return-to-go
    # ranks send precision instead of send volume
    click_cost: float = 0.55

    # organic visits: sigmoid(visit_bias + visit_engagement * e - visit_fatigue * f)
    visit_bias: float = -5.5
    visit_engagement: float = 4.5
    visit_fatigue: float = 0.4

    # volume penalty reward: -penalty_scale * fatigue after the send
    penalty_scale: float = 0.12

    # candidate quality: tanh-shaped around 0.5 (mass pushed toward the
    # extremes, 0 = uniform); keeps clear high/low candidates distinguishable
    quality_shape: float = 4.0

    # eligible-action-set distribution (dont_send is always eligible)
    p_full_eas: float = 0.8
    p_no_push: float = 0.1

    # behavior heuristic
    push_threshold: float = 0.75
    badge_threshold: float = 0.55
    cap_window: int = 3

    # observable state
    obs_send_window: int = 12
    visit_gap_cap: int = 48

    def __post_init__(self):
        if self.n_rewards != 3:
            raise ValueError("the simulator emits exactly 3 reward components")
        if not (0.0 < self.fatigue_decay < 1.0):
            raise ValueError("fatigue_decay must be in (0, 1)")
        if self.p_full_eas + self.p_no_push > 1.0:
            raise ValueError("EAS pattern probabilities exceed 1")
        if self.cap_window < 1 or self.obs_send_window < 1:
            raise ValueError("cap_window and obs_send_window must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
