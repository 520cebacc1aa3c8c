#include "apsc/guidance.hpp"

namespace apsc::guidance {

// Prompt texts are data; keep them byte-stable and bump the version on change.
const PromptBundle& PromptBundle::standard() {
    static const PromptBundle bundle{
        "v1",
        "You are an expert inferring initial controller priors from a short user preference."
        " Return STRICT JSON with keys: e_max, mu_0, sigma_0, bar_sigma, assumptions, rationale."
        " Meanings:"
        " - e_max: maximum lane tracking error tolerance. Larger for more aggressive turns/risk; smaller for more conservative/precise."
        " - mu_0: initial prior for road-tire friction (icy small, normal medium, dry large)."
        " - sigma_0: uncertainty (std^2) of the friction prior; larger if the user sounds unsure or contradictory."
        " - bar_sigma: confidence of the estimator on its measurements; increase if not sure if estimator is good."
        " Policy:"
        " - If the user uses vague words (\"seems\", \"maybe\", \"not sure\", \"probably\"), pick the most likely road class they stated,"
        " - Only change e_max with explicit user cues."
        " Valid discrete ranges:"
        " - e_max in {3,5,10}; mu_0 in {0.3,0.5,0.9}; sigma_0 in {0.05,0.3}; bar_sigma in {0.05,0.3}."
        " Output ONLY JSON in this exact shape: "
        " {\"e_max\":0,\"mu_0\":0.0,\"sigma_0\":0.0,\"bar_sigma\":0.0,\"assumptions\":{\"style\":\"\",\"road\":\"\",\"speed_kmh\":0,\"lane_quality\":\"\"},\"rationale\":\"\"} "
        " Ensure values are from the allowed sets and remember these are initial priors, not ground truth.",
        "=== Quantitative feedback from the last run ===\n{feedback}\n"
        "=== User feedback ===\n{user}\n"
        "=== Your task ===\n"
        "Based on both quantitative feedback and qualitative user feedback, infer new reasonable parameters."
        "Return STRICT JSON with keys: e_max, mu_0, sigma_0, bar_sigma, assumptions, rationale.\n"
        " Meanings:"
        " - e_max: maximum lane tracking error tolerance. Larger for more aggressive turns/risk; smaller for more conservative/precise."
        " - mu_0: initial prior for road-tire friction (icy small, normal medium, dry large)."
        " - sigma_0: uncertainty (std^2) of the friction prior; larger if the user sounds unsure or contradictory."
        " - bar_sigma: confidence of the estimator on its measurements; increase if not sure if estimator is good. You should try to trust the estimator."
        " Policy:"
        " - If the user uses vague words (\"seems\", \"maybe\", \"not sure\", \"probably\"), pick the most likely road class they stated,"
        " - Only change e_max with explicit user cues."
        " Valid discrete ranges:"
        " - e_max in {3,5,10}; mu_0 in {0.3,0.5,0.9}; sigma_0 in {0.05,0.3}; bar_sigma in {0.05,0.3}."
        " - Keep bar_sigma=0.05. Only set bar_sigma=0.3 if the text explicitly mentions sensing/visibility problems (fog/rain/snow/glare/low light/sensor fault) and explain why.\n"
        " - Keep sigma_0=0.05 and align mu_0 with previous estimation. Set sigma_0=0.3 and different mu_0 only if (a) the user hedges about the ROAD (\"seems/maybe/not sure/probably\"), or (b) the user statement contradicts quantitative feedback suggesting a different friction class; explain the uncertainty.\n"
        " Output ONLY JSON in this exact shape: "
        " {\"e_max\":0,\"mu_0\":0.0,\"sigma_0\":0.0,\"bar_sigma\":0.0,\"assumptions\":{\"style\":\"\",\"road\":\"\",\"speed_kmh\":0,\"lane_quality\":\"\"},\"rationale\":\"\"} "
        "Ensure values are from the allowed sets and remember these are initial priors, not ground truth.\n",
    };
    return bundle;
}

}  // namespace apsc::guidance
