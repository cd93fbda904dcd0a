//! The FastWave denoiser network: residual blocks with a local depthwise
//! (ConvNeXtV2-style) branch and a global spectral branch, band-conditioned
//! through a shared BSFT MLP, with the noise level injected as a learned
//! per-channel bias from a random-Fourier embedding.
//!
//! Layout per block, for C channels split into C_l local + C_g global:
//!
//! ```text
//! u = h + linear(sigma_embed)            per-channel bias
//! local : dwconv(k) -> pwconv(C_l -> 4C_l) -> GELU -> GRN -> pwconv(-> C_l)
//! global: rfft -> (gamma, beta) modulation -> pwconv(C_g -> C_g) -> irfft
//! out   : concat -> pwconv(C -> C, zero-init) + h
//! ```
//!
//! The gamma/beta pair comes from one BSFT MLP shared by all blocks
//! (dwconv along frequency -> pwconv -> GELU -> GRN -> two heads), driven by
//! the band mask resampled to the block's frequency resolution. Output
//! projections (per block and final) start at zero, so a fresh network is
//! exactly the zero function.

use crate::error::{Error, Result};
use crate::fft::is_power_of_two;
use crate::nn::{
    gelu, gelu_backward, irfft_time, irfft_time_backward, rfft_time, rfft_time_backward,
    sigma_embedding, DwConv1d, Grn, InitCtx, Linear, PwConv1d,
};
use crate::scalar::Scalar;
use crate::tensor::{CTensor, Tensor};

pub const FULL_BAND_RATE: u32 = 48000;
/// Frequency bins of the reference 2048-point analysis.
pub const MASK_BINS: usize = 1025;
const GRN_EPS: f64 = 1e-6;
const LOCAL_EXPANSION: usize = 4;

/// Band conditioning: which of the 1025 reference bins the source signal
/// covers. cutoff_index = floor(1025 * f_in / 48000).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandSpec {
    pub source_rate: u32,
    pub cutoff_index: usize,
    pub mask: Vec<u8>,
}

/// Cutoff bin for a source rate, on the 1025-bin grid.
pub fn cutoff_index(f_in: u32) -> Result<usize> {
    if f_in == 0 || f_in > FULL_BAND_RATE {
        return Err(Error::invalid(format!(
            "source rate {f_in} outside (0, {FULL_BAND_RATE}]"
        )));
    }
    Ok((MASK_BINS as u64 * f_in as u64 / FULL_BAND_RATE as u64) as usize)
}

/// Build the binary band mask for a source rate.
pub fn band_mask(f_in: u32) -> Result<BandSpec> {
    let cutoff = cutoff_index(f_in)?;
    let mask = (0..MASK_BINS).map(|i| u8::from(i < cutoff)).collect();
    Ok(BandSpec {
        source_rate: f_in,
        cutoff_index: cutoff,
        mask,
    })
}

impl BandSpec {
    /// Nearest-bin resampling of the mask to `bins` frequency points.
    pub fn mask_at_resolution<T: Scalar>(&self, bins: usize) -> Tensor<T> {
        let mut data = Vec::with_capacity(bins);
        for i in 0..bins {
            let j = if bins > 1 {
                ((i as f64) * (MASK_BINS - 1) as f64 / (bins - 1) as f64).round() as usize
            } else {
                0
            };
            data.push(T::of(self.mask[j.min(MASK_BINS - 1)] as f64));
        }
        Tensor::from_vec(&[1, 1, bins], data).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub n_blocks: usize,
    pub dw_kernel: usize,
    pub embed_dim: usize,
    pub ffc_global_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 32,
            n_blocks: 8,
            dw_kernel: 7,
            embed_dim: 128,
            ffc_global_fraction: 0.5,
        }
    }
}

impl ModelConfig {
    /// Tiny topology used by tests and gradient checks.
    pub fn toy() -> Self {
        ModelConfig {
            base_channels: 16,
            n_blocks: 4,
            dw_kernel: 7,
            embed_dim: 64,
            ffc_global_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.n_blocks == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.dw_kernel % 2 == 0 {
            return Err(Error::invalid("dw_kernel must be odd"));
        }
        if self.embed_dim % 2 != 0 {
            return Err(Error::invalid("embed_dim must be even"));
        }
        if !(0.0..=1.0).contains(&self.ffc_global_fraction) {
            return Err(Error::invalid("ffc_global_fraction must be in [0, 1]"));
        }
        let g = self.ffc_global_fraction * self.base_channels as f64;
        if (g - g.round()).abs() > 1e-9 {
            return Err(Error::invalid(
                "ffc_global_fraction * base_channels must be an integer",
            ));
        }
        Ok(())
    }

    pub fn global_channels(&self) -> usize {
        (self.ffc_global_fraction * self.base_channels as f64).round() as usize
    }

    pub fn local_channels(&self) -> usize {
        self.base_channels - self.global_channels()
    }
}

/// Everything the network needs besides the noisy signal itself.
#[derive(Debug, Clone)]
pub struct ConditioningBundle<T> {
    /// Low-resolution signal interpolated to 48 kHz; same length as the
    /// noisy input.
    pub upsampled: Tensor<T>,
    pub band: BandSpec,
}

impl<T: Scalar> ConditioningBundle<T> {
    pub fn new(upsampled: Tensor<T>, band: BandSpec) -> Self {
        ConditioningBundle { upsampled, band }
    }
}

#[derive(Debug, Clone)]
pub struct BsftMlp<T> {
    pub dw: DwConv1d<T>,
    pub pw: PwConv1d<T>,
    pub grn: Grn<T>,
    pub gamma_head: PwConv1d<T>,
    pub beta_head: PwConv1d<T>,
}

impl<T: Scalar> BsftMlp<T> {
    fn new(hidden: usize, c_global: usize, k: usize, init: &mut InitCtx) -> Self {
        let dw = DwConv1d::new(1, k, init);
        let pw = PwConv1d::new(1, hidden, init);
        let mut gamma_head = PwConv1d::new(hidden, c_global, init);
        // scale head starts around identity modulation
        if let Some(b) = gamma_head.bias.as_mut() {
            b.data_mut().iter_mut().for_each(|v| *v = T::one());
        }
        let beta_head = PwConv1d::new(hidden, c_global, init);
        BsftMlp {
            dw,
            pw,
            grn: Grn::new(hidden, GRN_EPS),
            gamma_head,
            beta_head,
        }
    }

    fn param_count(&self) -> usize {
        self.dw.param_count()
            + self.pw.param_count()
            + self.grn.param_count()
            + self.gamma_head.param_count()
            + self.beta_head.param_count()
    }
}

/// Forward intermediates of the shared BSFT MLP, one per forward call.
pub struct BsftCache<T> {
    mask: Tensor<T>,
    m1: Tensor<T>,
    m2: Tensor<T>,
    m3: Tensor<T>,
    m4: Tensor<T>,
    /// (1, C_g, F') scale and shift.
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    /// Gradients wrt gamma/beta, accumulated across blocks.
    g_gamma: Tensor<T>,
    g_beta: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct StfcBlock<T> {
    pub sigma_lin: Linear<T>,
    pub local_dw: DwConv1d<T>,
    pub local_pw1: PwConv1d<T>,
    pub local_grn: Grn<T>,
    pub local_pw2: PwConv1d<T>,
    pub freq_pw: PwConv1d<T>,
    pub out_proj: PwConv1d<T>,
}

impl<T: Scalar> StfcBlock<T> {
    fn new(cfg: &ModelConfig, init: &mut InitCtx) -> Self {
        let c = cfg.base_channels;
        let cl = cfg.local_channels();
        let cg = cfg.global_channels();
        StfcBlock {
            sigma_lin: Linear::new(cfg.embed_dim, c, init),
            local_dw: DwConv1d::new(cl, cfg.dw_kernel, init),
            local_pw1: PwConv1d::new(cl, cl * LOCAL_EXPANSION, init),
            local_grn: Grn::new(cl * LOCAL_EXPANSION, GRN_EPS),
            local_pw2: PwConv1d::new(cl * LOCAL_EXPANSION, cl, init),
            freq_pw: PwConv1d::new_no_bias(cg, cg, init),
            out_proj: PwConv1d::new_zero(c, c),
        }
    }

    fn param_count(&self) -> usize {
        self.sigma_lin.param_count()
            + self.local_dw.param_count()
            + self.local_pw1.param_count()
            + self.local_grn.param_count()
            + self.local_pw2.param_count()
            + self.freq_pw.param_count()
            + self.out_proj.param_count()
    }
}

struct BlockCache<T> {
    u_local: Tensor<T>,
    a1: Tensor<T>,
    a2: Tensor<T>,
    a3: Tensor<T>,
    a4: Tensor<T>,
    re: Tensor<T>,
    im: Tensor<T>,
    re_m: Tensor<T>,
    im_m: Tensor<T>,
    concat: Tensor<T>,
}

/// Forward intermediates needed by [`DenoiserNet::backward`].
pub struct NetCache<T> {
    stack: Tensor<T>,
    embed: Tensor<T>,
    /// h entering each block, plus the final h entering out_proj.
    h: Vec<Tensor<T>>,
    blocks: Vec<BlockCache<T>>,
    bsft: BsftCache<T>,
}

#[derive(Debug, Clone)]
pub struct DenoiserNet<T> {
    pub config: ModelConfig,
    /// Frozen random-Fourier frequencies of the noise-level embedding.
    pub embed_freqs: Vec<f64>,
    pub in_proj: PwConv1d<T>,
    pub blocks: Vec<StfcBlock<T>>,
    pub bsft: BsftMlp<T>,
    pub out_proj: PwConv1d<T>,
}

/// Build the network with deterministic parameters derived from `seed`.
pub fn build_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<DenoiserNet<T>> {
    config.validate()?;
    let mut init = InitCtx::new(seed);
    let embed_freqs = init.standard_normals(config.embed_dim / 2);
    let in_proj = PwConv1d::new(2, config.base_channels, &mut init);
    let blocks = (0..config.n_blocks)
        .map(|_| StfcBlock::new(config, &mut init))
        .collect();
    let bsft = BsftMlp::new(
        config.base_channels,
        config.global_channels(),
        config.dw_kernel,
        &mut init,
    );
    let out_proj = PwConv1d::new_zero(config.base_channels, 1);
    Ok(DenoiserNet {
        config: config.clone(),
        embed_freqs,
        in_proj,
        blocks,
        bsft,
        out_proj,
    })
}

impl<T: Scalar> DenoiserNet<T> {
    /// Exact trainable-parameter total.
    pub fn count_params(&self) -> usize {
        self.in_proj.param_count()
            + self
                .blocks
                .iter()
                .map(StfcBlock::param_count)
                .sum::<usize>()
            + self.bsft.param_count()
            + self.out_proj.param_count()
    }

    /// FLOPs of one batch-1 forward at input length `t` (one function
    /// evaluation). Convolutions count 2 per multiply-add, FFTs count
    /// 5*T*log2(T) per channel per transform, element-wise ops 1 per
    /// element (GELU 1, GRN 4, modulation 4, bias/residual adds 1).
    pub fn count_flops(&self, t: usize) -> u64 {
        let c = self.config.base_channels as u64;
        let cl = self.config.local_channels() as u64;
        let cg = self.config.global_channels() as u64;
        let bins = (t / 2 + 1) as u64;
        let tu = t as u64;
        let log2t = (t.max(2) as f64).log2() as u64;
        let fft_one = 5 * tu * log2t;

        let mut total = self.in_proj.flops(t) + c * tu; // + bias add
        for b in &self.blocks {
            let mut blk = 0;
            blk += c * tu; // sigma bias add
            blk += b.local_dw.flops(t) + cl * tu;
            blk += b.local_pw1.flops(t) + cl * LOCAL_EXPANSION as u64 * tu;
            blk += cl * LOCAL_EXPANSION as u64 * tu; // gelu
            blk += 4 * cl * LOCAL_EXPANSION as u64 * tu; // grn
            blk += b.local_pw2.flops(t) + cl * tu;
            blk += 2 * cg * fft_one; // rfft + irfft
            blk += 4 * cg * bins; // modulation on re+im
            blk += 2 * b.freq_pw.flops(bins as usize); // re and im passes
            blk += b.out_proj.flops(t) + c * tu;
            blk += c * tu; // residual add
            total += blk;
        }
        // shared BSFT MLP, evaluated once per forward on F' points
        let h = self.config.base_channels as u64;
        total += self.bsft.dw.flops(bins as usize) + bins;
        total += self.bsft.pw.flops(bins as usize) + h * bins;
        total += h * bins; // gelu
        total += 4 * h * bins; // grn
        total += self.bsft.gamma_head.flops(bins as usize) + cg * bins;
        total += self.bsft.beta_head.flops(bins as usize) + cg * bins;
        total += self.out_proj.flops(t) + tu;
        total
    }

    /// Visit every parameter tensor in a fixed order.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        visit_pw(&mut self.in_proj, "in_proj", f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("blocks.{i}");
            f(format!("{p}.sigma_lin.weight"), &mut b.sigma_lin.weight);
            f(format!("{p}.sigma_lin.bias"), &mut b.sigma_lin.bias);
            f(format!("{p}.local_dw.weight"), &mut b.local_dw.weight);
            if let Some(bias) = b.local_dw.bias.as_mut() {
                f(format!("{p}.local_dw.bias"), bias);
            }
            visit_pw(&mut b.local_pw1, &format!("{p}.local_pw1"), f);
            f(format!("{p}.local_grn.gamma"), &mut b.local_grn.gamma);
            f(format!("{p}.local_grn.beta"), &mut b.local_grn.beta);
            visit_pw(&mut b.local_pw2, &format!("{p}.local_pw2"), f);
            visit_pw(&mut b.freq_pw, &format!("{p}.freq_pw"), f);
            visit_pw(&mut b.out_proj, &format!("{p}.out_proj"), f);
        }
        f("bsft.dw.weight".into(), &mut self.bsft.dw.weight);
        if let Some(bias) = self.bsft.dw.bias.as_mut() {
            f("bsft.dw.bias".into(), bias);
        }
        visit_pw(&mut self.bsft.pw, "bsft.pw", f);
        f("bsft.grn.gamma".into(), &mut self.bsft.grn.gamma);
        f("bsft.grn.beta".into(), &mut self.bsft.grn.beta);
        visit_pw(&mut self.bsft.gamma_head, "bsft.gamma_head", f);
        visit_pw(&mut self.bsft.beta_head, "bsft.beta_head", f);
        visit_pw(&mut self.out_proj, "out_proj", f);
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param_mut(&mut |_, p| p.zero_grad());
    }

    /// Raw network forward F_theta. `x_in` is the preconditioned noisy
    /// signal (B, 1, T); T must be a power of two (the caller pads).
    pub fn forward(
        &self,
        x_in: &Tensor<T>,
        c_noise: f64,
        cond: &ConditioningBundle<T>,
    ) -> Result<(Tensor<T>, NetCache<T>)> {
        let (bn, ch, t) = x_in.dims3()?;
        if ch != 1 {
            return Err(Error::invalid("network input must have one channel"));
        }
        if !is_power_of_two(t) {
            return Err(Error::invalid(format!(
                "input length {t} is not a power of two; pad before calling"
            )));
        }
        if cond.upsampled.shape() != x_in.shape() {
            return Err(Error::invalid(format!(
                "conditioning shape {:?} does not match input {:?}",
                cond.upsampled.shape(),
                x_in.shape()
            )));
        }

        let embed = sigma_embedding::<T>(c_noise, &self.embed_freqs);
        let stack = stack_channels(x_in, &cond.upsampled)?;
        let mut h = self.in_proj.forward(&stack)?;

        let bins = t / 2 + 1;
        let bsft = self.bsft_forward(&cond.band, bins)?;

        let cl = self.config.local_channels();
        let mut h_list = Vec::with_capacity(self.config.n_blocks + 1);
        let mut block_caches = Vec::with_capacity(self.config.n_blocks);
        for block in &self.blocks {
            h_list.push(h.clone());
            let s = block.sigma_lin.forward(&embed)?;
            let u = add_channel_bias(&h, &s);
            let (u_local, u_global) = split_channels(&u, cl)?;

            // local ConvNeXtV2 branch
            let a1 = block.local_dw.forward(&u_local)?;
            let a2 = block.local_pw1.forward(&a1)?;
            let a3 = gelu(&a2);
            let a4 = block.local_grn.forward(&a3)?;
            let a5 = block.local_pw2.forward(&a4)?;

            // global spectral branch
            let spec = rfft_time(&u_global)?;
            let (re, im) = spec.split_re_im();
            let (re_m, im_m) = modulate(&re, &im, &bsft.gamma, &bsft.beta)?;
            let re_p = block.freq_pw.forward(&re_m)?;
            let im_p = block.freq_pw.forward(&im_m)?;
            let g_out = irfft_time(&CTensor::from_re_im(&re_p, &im_p)?, t)?;

            let concat = concat_channels(&a5, &g_out)?;
            let update = block.out_proj.forward(&concat)?;
            h = h.add(&update)?;
            block_caches.push(BlockCache {
                u_local,
                a1,
                a2,
                a3,
                a4,
                re,
                im,
                re_m,
                im_m,
                concat,
            });
        }
        h_list.push(h.clone());
        let out = self.out_proj.forward(&h)?;
        if out.shape() != [bn, 1, t] {
            return Err(Error::Internal(format!(
                "network output shape {:?}, expected {:?}",
                out.shape(),
                [bn, 1, t]
            )));
        }
        Ok((
            out,
            NetCache {
                stack,
                embed,
                h: h_list,
                blocks: block_caches,
                bsft,
            },
        ))
    }

    /// Forward without keeping the cache.
    pub fn infer(
        &self,
        x_in: &Tensor<T>,
        c_noise: f64,
        cond: &ConditioningBundle<T>,
    ) -> Result<Tensor<T>> {
        self.forward(x_in, c_noise, cond).map(|(y, _)| y)
    }

    fn bsft_forward(&self, band: &BandSpec, bins: usize) -> Result<BsftCache<T>> {
        let mask = band.mask_at_resolution::<T>(bins);
        let m1 = self.bsft.dw.forward(&mask)?;
        let m2 = self.bsft.pw.forward(&m1)?;
        let m3 = gelu(&m2);
        let m4 = self.bsft.grn.forward(&m3)?;
        let gamma = self.bsft.gamma_head.forward(&m4)?;
        let beta = self.bsft.beta_head.forward(&m4)?;
        let g_gamma = Tensor::zeros(gamma.shape());
        let g_beta = Tensor::zeros(beta.shape());
        Ok(BsftCache {
            mask,
            m1,
            m2,
            m3,
            m4,
            gamma,
            beta,
            g_gamma,
            g_beta,
        })
    }

    /// Backpropagate through the whole network, accumulating parameter
    /// gradients. Returns the gradient wrt the stacked 2-channel input.
    pub fn backward(&mut self, cache: &mut NetCache<T>, g_out: &Tensor<T>) -> Result<Tensor<T>> {
        let n_blocks = self.blocks.len();
        let cl = self.config.local_channels();
        let t = cache.stack.shape()[2];

        let mut g_h = self.out_proj.backward(&cache.h[n_blocks], g_out)?;
        for i in (0..n_blocks).rev() {
            let block = &mut self.blocks[i];
            let bc = &cache.blocks[i];

            let g_concat = block.out_proj.backward(&bc.concat, &g_h)?;
            let (g_a5, g_gout) = split_channels(&g_concat, cl)?;

            // local branch
            let g_a4 = block.local_pw2.backward(&bc.a4, &g_a5)?;
            let g_a3 = block.local_grn.backward(&bc.a3, &g_a4)?;
            let g_a2 = gelu_backward(&bc.a2, &g_a3)?;
            let g_a1 = block.local_pw1.backward(&bc.a1, &g_a2)?;
            let g_ulocal = block.local_dw.backward(&bc.u_local, &g_a1)?;

            // global branch
            let g_spec = irfft_time_backward(&g_gout)?;
            let (g_re_p, g_im_p) = g_spec.split_re_im();
            let g_re_m = block.freq_pw.backward(&bc.re_m, &g_re_p)?;
            let g_im_m = block.freq_pw.backward(&bc.im_m, &g_im_p)?;
            let (g_re, g_im) = modulate_backward(
                &bc.re,
                &bc.im,
                &cache.bsft.gamma,
                &g_re_m,
                &g_im_m,
                &mut cache.bsft.g_gamma,
                &mut cache.bsft.g_beta,
            )?;
            let g_uglobal = rfft_time_backward(&CTensor::from_re_im(&g_re, &g_im)?, t)?;

            let g_u = concat_channels(&g_ulocal, &g_uglobal)?;
            let g_s = sum_over_batch_time(&g_u);
            block.sigma_lin.backward(&cache.embed, &g_s)?;

            g_h = g_h.add(&g_u)?;
        }

        // shared BSFT MLP, with gamma/beta gradients accumulated over blocks
        let g_m4a = self
            .bsft
            .gamma_head
            .backward(&cache.bsft.m4, &cache.bsft.g_gamma)?;
        let g_m4b = self
            .bsft
            .beta_head
            .backward(&cache.bsft.m4, &cache.bsft.g_beta)?;
        let g_m4 = g_m4a.add(&g_m4b)?;
        let g_m3 = self.bsft.grn.backward(&cache.bsft.m3, &g_m4)?;
        let g_m2 = gelu_backward(&cache.bsft.m2, &g_m3)?;
        let g_m1 = self.bsft.pw.backward(&cache.bsft.m1, &g_m2)?;
        let _g_mask = self.bsft.dw.backward(&cache.bsft.mask, &g_m1)?;

        self.in_proj.backward(&cache.stack, &g_h)
    }
}

fn visit_pw<T: Scalar>(
    pw: &mut PwConv1d<T>,
    prefix: &str,
    f: &mut dyn FnMut(String, &mut Tensor<T>),
) {
    f(format!("{prefix}.weight"), &mut pw.weight);
    if let Some(b) = pw.bias.as_mut() {
        f(format!("{prefix}.bias"), b);
    }
}

fn stack_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (bn, _, t) = a.dims3()?;
    let mut out = Tensor::zeros(&[bn, 2, t]);
    for bi in 0..bn {
        out.data_mut()[(bi * 2) * t..][..t].copy_from_slice(&a.data()[bi * t..][..t]);
        out.data_mut()[(bi * 2 + 1) * t..][..t].copy_from_slice(&b.data()[bi * t..][..t]);
    }
    Ok(out)
}

fn split_channels<T: Scalar>(x: &Tensor<T>, c_first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (bn, c, t) = x.dims3()?;
    let c_second = c - c_first;
    let mut a = Tensor::zeros(&[bn, c_first, t]);
    let mut b = Tensor::zeros(&[bn, c_second, t]);
    for bi in 0..bn {
        let src = &x.data()[bi * c * t..][..c * t];
        a.data_mut()[bi * c_first * t..][..c_first * t].copy_from_slice(&src[..c_first * t]);
        b.data_mut()[bi * c_second * t..][..c_second * t].copy_from_slice(&src[c_first * t..]);
    }
    Ok((a, b))
}

fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (bn, ca, t) = a.dims3()?;
    let (_, cb, _) = b.dims3()?;
    let mut out = Tensor::zeros(&[bn, ca + cb, t]);
    for bi in 0..bn {
        let dst = &mut out.data_mut()[bi * (ca + cb) * t..][..(ca + cb) * t];
        dst[..ca * t].copy_from_slice(&a.data()[bi * ca * t..][..ca * t]);
        dst[ca * t..].copy_from_slice(&b.data()[bi * cb * t..][..cb * t]);
    }
    Ok(out)
}

fn add_channel_bias<T: Scalar>(x: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let (bn, c, t) = x.dims3().unwrap();
    let mut out = x.clone();
    for bi in 0..bn {
        for ci in 0..c {
            let b = bias.data()[ci];
            out.data_mut()[(bi * c + ci) * t..][..t]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
    out
}

fn sum_over_batch_time<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let (bn, c, t) = g.dims3().unwrap();
    let mut out = Tensor::zeros(&[c]);
    for bi in 0..bn {
        for ci in 0..c {
            let mut acc = T::zero();
            g.data()[(bi * c + ci) * t..][..t]
                .iter()
                .for_each(|&v| acc += v);
            out.data_mut()[ci] += acc;
        }
    }
    out
}

/// FiLM modulation on the one-sided spectrum: the same gamma/beta applied to
/// the real and imaginary parts, broadcast over the batch.
pub fn modulate<T: Scalar>(
    re: &Tensor<T>,
    im: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (bn, c, f) = re.dims3()?;
    if gamma.shape() != [1, c, f] || beta.shape() != [1, c, f] {
        return Err(Error::invalid("modulation gamma/beta shape mismatch"));
    }
    let mut re_m = Tensor::zeros(re.shape());
    let mut im_m = Tensor::zeros(im.shape());
    for bi in 0..bn {
        for i in 0..c * f {
            let g = gamma.data()[i];
            let b = beta.data()[i];
            re_m.data_mut()[bi * c * f + i] = g * re.data()[bi * c * f + i] + b;
            im_m.data_mut()[bi * c * f + i] = g * im.data()[bi * c * f + i] + b;
        }
    }
    Ok((re_m, im_m))
}

#[allow(clippy::too_many_arguments)]
fn modulate_backward<T: Scalar>(
    re: &Tensor<T>,
    im: &Tensor<T>,
    gamma: &Tensor<T>,
    g_re_m: &Tensor<T>,
    g_im_m: &Tensor<T>,
    g_gamma: &mut Tensor<T>,
    g_beta: &mut Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (bn, c, f) = re.dims3()?;
    let mut g_re = Tensor::zeros(re.shape());
    let mut g_im = Tensor::zeros(im.shape());
    for bi in 0..bn {
        for i in 0..c * f {
            let idx = bi * c * f + i;
            let g = gamma.data()[i];
            g_re.data_mut()[idx] = g * g_re_m.data()[idx];
            g_im.data_mut()[idx] = g * g_im_m.data()[idx];
            g_gamma.data_mut()[i] +=
                g_re_m.data()[idx] * re.data()[idx] + g_im_m.data()[idx] * im.data()[idx];
            g_beta.data_mut()[i] += g_re_m.data()[idx] + g_im_m.data()[idx];
        }
    }
    Ok((g_re, g_im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_error};
    use crate::rng::Prng;

    fn toy_cond(t: usize, rate: u32, stream: u64) -> ConditioningBundle<f64> {
        let p = Prng::new(400);
        let up = Tensor::from_vec(
            &[1, 1, t],
            (0..t).map(|i| 0.3 * p.normal(stream, i as u64)).collect(),
        )
        .unwrap();
        ConditioningBundle::new(up, band_mask(rate).unwrap())
    }

    fn toy_input(bn: usize, t: usize, stream: u64) -> Tensor<f64> {
        let p = Prng::new(401);
        Tensor::from_vec(
            &[bn, 1, t],
            (0..bn * t).map(|i| p.normal(stream, i as u64)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn cutoff_indices_match_reference_rates() {
        assert_eq!(cutoff_index(8000).unwrap(), 170);
        assert_eq!(cutoff_index(12000).unwrap(), 256);
        assert_eq!(cutoff_index(16000).unwrap(), 341);
        assert_eq!(cutoff_index(24000).unwrap(), 512);
        assert_eq!(cutoff_index(48000).unwrap(), 1025);
        assert!(cutoff_index(0).is_err());
        assert!(cutoff_index(96000).is_err());
    }

    #[test]
    fn band_mask_structure_and_monotonicity() {
        let full = band_mask(48000).unwrap();
        assert!(full.mask.iter().all(|&m| m == 1));
        let spec = band_mask(24000).unwrap();
        assert_eq!(spec.mask[511], 1);
        assert_eq!(spec.mask[512], 0);
        let mut prev = 0;
        for rate in [1000u32, 8000, 12000, 16000, 24000, 44000, 48000] {
            let c = cutoff_index(rate).unwrap();
            assert!(c >= prev, "cutoff not monotone at {rate}");
            prev = c;
        }
    }

    #[test]
    fn fresh_model_is_zero_function() {
        let cfg = ModelConfig::toy();
        let net = build_model::<f64>(&cfg, 7).unwrap();
        let x = toy_input(1, 64, 1);
        let cond = toy_cond(64, 16000, 2);
        let y = net.infer(&x, 0.25, &cond).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = ModelConfig::toy();
        let mut a = build_model::<f64>(&cfg, 99).unwrap();
        let mut b = build_model::<f64>(&cfg, 99).unwrap();
        let mut diff = false;
        a.for_each_param_mut(&mut |name, pa| {
            b.for_each_param_mut(&mut |name_b, pb| {
                if name == name_b && pa.data() != pb.data() {
                    diff = true;
                }
            });
        });
        assert!(!diff);
        let mut c = build_model::<f64>(&cfg, 100).unwrap();
        let mut any_different = false;
        a.for_each_param_mut(&mut |name, pa| {
            c.for_each_param_mut(&mut |name_c, pc| {
                if name == name_c && pa.data() != pc.data() {
                    any_different = true;
                }
            });
        });
        assert!(any_different);
    }

    #[test]
    fn shape_preserved_and_batch_duplication_identical() {
        let cfg = ModelConfig::toy();
        let mut net = build_model::<f64>(&cfg, 3).unwrap();
        randomize_projections(&mut net, 5);
        let t = 64;
        let x1 = toy_input(1, t, 3);
        // duplicate the item along the batch
        let mut x2 = Tensor::zeros(&[2, 1, t]);
        x2.data_mut()[..t].copy_from_slice(x1.data());
        x2.data_mut()[t..].copy_from_slice(x1.data());
        let cond1 = toy_cond(t, 16000, 4);
        let mut up2 = Tensor::zeros(&[2, 1, t]);
        up2.data_mut()[..t].copy_from_slice(cond1.upsampled.data());
        up2.data_mut()[t..].copy_from_slice(cond1.upsampled.data());
        let cond2 = ConditioningBundle::new(up2, cond1.band.clone());

        let y1 = net.infer(&x1, 0.1, &cond1).unwrap();
        let y2 = net.infer(&x2, 0.1, &cond2).unwrap();
        assert_eq!(y2.shape(), &[2, 1, t]);
        assert_eq!(&y2.data()[..t], y1.data());
        assert_eq!(&y2.data()[t..], y1.data());
    }

    #[test]
    fn non_power_of_two_rejected() {
        let cfg = ModelConfig::toy();
        let net = build_model::<f64>(&cfg, 3).unwrap();
        let x = toy_input(1, 48, 3);
        let cond = toy_cond(48, 16000, 4);
        assert!(net.infer(&x, 0.1, &cond).is_err());
    }

    #[test]
    fn bsft_neutral_weights_give_identity_modulation() {
        let cfg = ModelConfig::toy();
        let mut net = build_model::<f64>(&cfg, 11).unwrap();
        // zero the MLP trunk and heads, then set gamma bias = 1, beta bias = 0
        zero_tensor(&mut net.bsft.dw.weight);
        if let Some(b) = net.bsft.dw.bias.as_mut() {
            zero_tensor(b);
        }
        zero_tensor(&mut net.bsft.pw.weight);
        if let Some(b) = net.bsft.pw.bias.as_mut() {
            zero_tensor(b);
        }
        zero_tensor(&mut net.bsft.gamma_head.weight);
        if let Some(b) = net.bsft.gamma_head.bias.as_mut() {
            b.data_mut().iter_mut().for_each(|v| *v = 1.0);
        }
        zero_tensor(&mut net.bsft.beta_head.weight);
        if let Some(b) = net.bsft.beta_head.bias.as_mut() {
            zero_tensor(b);
        }
        let bins = 33;
        let cache = net.bsft_forward(&band_mask(16000).unwrap(), bins).unwrap();
        assert!(cache.gamma.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(cache.beta.data().iter().all(|&v| v.abs() < 1e-15));

        let p = Prng::new(77);
        let cg = cfg.global_channels();
        let re = Tensor::from_vec(
            &[1, cg, bins],
            (0..cg * bins).map(|i| p.normal(1, i as u64)).collect(),
        )
        .unwrap();
        let im = Tensor::from_vec(
            &[1, cg, bins],
            (0..cg * bins).map(|i| p.normal(2, i as u64)).collect(),
        )
        .unwrap();
        let (re_m, im_m) = modulate(&re, &im, &cache.gamma, &cache.beta).unwrap();
        assert_eq!(re_m.data(), re.data());
        assert_eq!(im_m.data(), im.data());
    }

    #[test]
    fn different_bands_give_different_outputs() {
        let cfg = ModelConfig::toy();
        let mut net = build_model::<f64>(&cfg, 21).unwrap();
        randomize_projections(&mut net, 22);
        let t = 64;
        let x = toy_input(1, t, 5);
        let cond8 = toy_cond(t, 8000, 6);
        let cond24 = ConditioningBundle::new(cond8.upsampled.clone(), band_mask(24000).unwrap());
        let y8 = net.infer(&x, 0.2, &cond8).unwrap();
        let y24 = net.infer(&x, 0.2, &cond24).unwrap();
        let max_diff = y8
            .data()
            .iter()
            .zip(y24.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 1e-6, "band conditioning is dead: {max_diff}");
    }

    #[test]
    fn default_param_count_golden() {
        let net = build_model::<f64>(&ModelConfig::default(), 1).unwrap();
        // in_proj 96 + 8 blocks x 7824 + bsft 1192 + out_proj 33
        assert_eq!(net.count_params(), 63_913);
        let net2 = build_model::<f64>(&ModelConfig::default(), 1).unwrap();
        assert_eq!(net2.count_params(), 63_913);
    }

    #[test]
    fn flops_scale_linearly_in_conv_terms() {
        let net = build_model::<f64>(&ModelConfig::toy(), 1).unwrap();
        let f1 = net.count_flops(256);
        assert!(f1 > 0);
        // doubling T at least doubles the conv work
        assert!(net.count_flops(512) > 2 * f1 / 2);
    }

    /// Replace zero-initialized projections with random weights so gradients
    /// reach every parameter in a single backward pass.
    pub(crate) fn randomize_projections(net: &mut DenoiserNet<f64>, seed: u64) {
        let p = Prng::new(seed);
        let mut k = 0u64;
        net.for_each_param_mut(&mut |_, t| {
            if t.data().iter().all(|&v| v == 0.0) {
                for v in t.data_mut() {
                    *v = 0.3 * p.normal(5, k);
                    k += 1;
                }
            }
        });
    }

    fn zero_tensor(t: &mut Tensor<f64>) {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    #[test]
    fn full_network_gradients_match_finite_differences() {
        let cfg = ModelConfig {
            base_channels: 8,
            n_blocks: 2,
            dw_kernel: 3,
            embed_dim: 8,
            ffc_global_fraction: 0.5,
        };
        let mut net = build_model::<f64>(&cfg, 13).unwrap();
        randomize_projections(&mut net, 14);
        let t = 16;
        let x = toy_input(1, t, 7);
        let cond = toy_cond(t, 12000, 8);
        let mix = {
            let p = Prng::new(402);
            Tensor::from_vec(&[1, 1, t], (0..t).map(|i| p.normal(9, i as u64)).collect()).unwrap()
        };

        // analytic gradients
        net.zero_grads();
        let (y, mut cache) = net.forward(&x, 0.17, &cond).unwrap();
        let gy = Tensor::from_vec(y.shape(), mix.data().to_vec()).unwrap();
        net.backward(&mut cache, &gy).unwrap();

        let mut names = Vec::new();
        let mut analytic = Vec::new();
        let mut values = Vec::new();
        net.for_each_param_mut(&mut |name, p| {
            names.push(name);
            analytic.push(p.grad().unwrap().to_vec());
            values.push(p.data().to_vec());
        });

        // numeric gradients per parameter tensor
        for (pi, name) in names.iter().enumerate() {
            let loss = |flat: &[f64]| {
                let mut net2 = net.clone();
                let mut idx = 0;
                net2.for_each_param_mut(&mut |_, p| {
                    if idx == pi {
                        p.data_mut().copy_from_slice(flat);
                    }
                    idx += 1;
                });
                let y = net2.infer(&x, 0.17, &cond).unwrap();
                y.data()
                    .iter()
                    .zip(mix.data())
                    .map(|(&a, &b)| a * b)
                    .sum::<f64>()
            };
            let numeric = central_diff(loss, &values[pi], 1e-5);
            let err = max_rel_error(&analytic[pi], &numeric);
            assert!(err <= 1e-5, "{name}: rel error {err}");
        }
    }

    #[test]
    fn no_dead_parameters_on_randomized_net() {
        let cfg = ModelConfig::toy();
        let mut net = build_model::<f64>(&cfg, 31).unwrap();
        randomize_projections(&mut net, 32);
        let t = 64;
        let x = toy_input(1, t, 10);
        let cond = toy_cond(t, 24000, 11);
        net.zero_grads();
        let (y, mut cache) = net.forward(&x, -0.3, &cond).unwrap();
        let gy = Tensor::from_vec(y.shape(), vec![1.0; y.numel()]).unwrap();
        net.backward(&mut cache, &gy).unwrap();
        net.for_each_param_mut(&mut |name, p| {
            let alive = p.grad().unwrap().iter().any(|&g| g.abs() > 0.0);
            assert!(alive, "parameter {name} received no gradient");
        });
    }
}
