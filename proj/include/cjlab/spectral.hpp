#pragma once
#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace cjlab::spectral {

using cplx = std::complex<double>;

// in-place n-d DFT (unnormalized both ways), row-major dims
void fft(std::vector<cplx>& data, std::span<const int> dims, bool inverse);

// full linear convolution of equally shaped arrays; result has dims 2*dims
std::vector<double> linear_convolve(std::span<const double> a, std::span<const double> b,
                                    std::span<const int> dims);

// periodic convolution on the index torus: c[k] = sum_m a[m] b[k-m]
std::vector<double> circular_convolve(std::span<const double> a, std::span<const double> b,
                                      std::span<const int> dims);

// multiply the DFT of a by mult(k) where k is the signed frequency index per axis
std::vector<double> fourier_multiply(std::span<const double> a, std::span<const int> dims,
                                     const std::function<double(std::span<const int>)>& mult);

}  // namespace cjlab::spectral
