#pragma once

// Throwaway localhost certificate for TLS tests.

#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace rap::testing {

struct CertFiles {
  std::string cert;
  std::string key;
};

inline CertFiles write_self_signed(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  EVP_PKEY* key = EVP_EC_gen("P-256");
  X509* x = X509_new();
  if (!key || !x) throw std::runtime_error("openssl: key generation failed");
  ASN1_INTEGER_set(X509_get_serialNumber(x), 1);
  X509_gmtime_adj(X509_getm_notBefore(x), -60);
  X509_gmtime_adj(X509_getm_notAfter(x), 3600);
  X509_set_pubkey(x, key);
  X509_NAME* name = X509_get_subject_name(x);
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC, reinterpret_cast<const unsigned char*>("localhost"), -1, -1, 0);
  X509_set_issuer_name(x, name);
  X509_sign(x, key, EVP_sha256());

  CertFiles out{(dir / "cert.pem").string(), (dir / "key.pem").string()};
  BIO* c = BIO_new_file(out.cert.c_str(), "w");
  BIO* k = BIO_new_file(out.key.c_str(), "w");
  const bool ok = c && k && PEM_write_bio_X509(c, x) && PEM_write_bio_PrivateKey(k, key, nullptr, nullptr, 0, nullptr, nullptr);
  BIO_free(c);
  BIO_free(k);
  X509_free(x);
  EVP_PKEY_free(key);
  if (!ok) throw std::runtime_error("openssl: cannot write certificate files");
  return out;
}

}  // namespace rap::testing
