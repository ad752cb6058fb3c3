/* Branch-free single-precision erf and exp that gcc/clang can auto-vectorize.
 *
 * phx_expf:  Cephes-style range reduction with a degree-6 polynomial,
 *            relative error ~2e-7 on [-87, 88].
 * phx_ncdff: standard normal CDF through a Chebyshev-fitted erfc, so the
 *            lower tail keeps its relative accuracy (no 1 + erf cancellation).
 */
#ifndef PHX_FASTMATH_H
#define PHX_FASTMATH_H

#include <stdint.h>
#include <string.h>

static inline float phx_expf(float x)
{
    x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
    float fx = x * 1.44269504088896341f + 0.5f;
    int32_t n = (int32_t)fx;
    n = n - ((float)n > fx);  /* floor */
    float fn = (float)n;
    float r = x - fn * 0.693359375f;
    r = r - fn * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    int32_t bits = (n + 127) << 23;
    float scale;
    memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}

/* erfc(z) for z >= 0, fractional error < 1.2e-7 (Numerical Recipes erfcc). */
static inline float phx_erfcf_pos(float z)
{
    float t = 1.0f / (1.0f + 0.5f * z);
    float p = 0.17087277f;
    p = p * t + -0.82215223f;
    p = p * t + 1.48851587f;
    p = p * t + -1.13520398f;
    p = p * t + 0.27886807f;
    p = p * t + -0.18628806f;
    p = p * t + 0.09678418f;
    p = p * t + 0.37409196f;
    p = p * t + 1.00002368f;
    p = p * t + -1.26551223f;
    return t * phx_expf(p - z * z);
}

static inline float phx_ncdff(float x)
{
    float z = (x < 0.0f ? -x : x) * 0.70710678118654752f;
    float tail = 0.5f * phx_erfcf_pos(z);
    return x < 0.0f ? tail : 1.0f - tail;
}

#endif
