/* Serverless function body shared by the native and wasm builds.
 *
 * Compile with -DWORKLOAD_ID=<1..8> to select the kernel this artifact
 * serves. Everything here is freestanding: no libc beyond what
 * platform.h exposes.
 */
#include "platform.h"

#ifndef WORKLOAD_ID
#error "WORKLOAD_ID must be defined"
#endif

#define W_AUDIO 1
#define W_FUZZY 2
#define W_LANG 3
#define W_ENCRYPT 4
#define W_DECRYPT 5
#define W_FIB 6
#define W_PRIMES 7
#define W_MANDEL 8

#if WORKLOAD_ID == W_AUDIO
#define WORKLOAD_NAME "audio-generation"
#elif WORKLOAD_ID == W_FUZZY
#define WORKLOAD_NAME "fuzzy-search"
#elif WORKLOAD_ID == W_LANG
#define WORKLOAD_NAME "language-detection"
#elif WORKLOAD_ID == W_ENCRYPT
#define WORKLOAD_NAME "encrypt-message"
#elif WORKLOAD_ID == W_DECRYPT
#define WORKLOAD_NAME "decrypt-message"
#elif WORKLOAD_ID == W_FIB
#define WORKLOAD_NAME "fibonacci"
#elif WORKLOAD_ID == W_PRIMES
#define WORKLOAD_NAME "prime-numbers"
#elif WORKLOAD_ID == W_MANDEL
#define WORKLOAD_NAME "mandelbrot-bitmap"
#else
#error "unknown WORKLOAD_ID"
#endif

#define INTEGER_WORKLOAD (WORKLOAD_ID == W_FIB || WORKLOAD_ID == W_PRIMES)
#define GENERATOR_WORKLOAD (WORKLOAD_ID == W_AUDIO || WORKLOAD_ID == W_MANDEL)
#define TEXT_RESULT \
    (WORKLOAD_ID == W_FIB || WORKLOAD_ID == W_PRIMES || WORKLOAD_ID == W_FUZZY || WORKLOAD_ID == W_LANG)

#define MAX_FRAME (16 * 1024 * 1024)
#define ARENA_SIZE (64 * 1024 * 1024)
#define MAX_PARAMS 32
#define MAX_KEY 256

static const uint64_t GROUP_BYTES[3] = {524288, 1048576, 2097152};
static const uint64_t GROUP_INTS[3] = {10000, 100000, 1000000};

/* ------------------------------------------------------------------ */
/* memory                                                               */

void *faas_memcpy(void *dst, const void *src, size_t n) {
    uint8_t *d = dst;
    const uint8_t *s = src;
    while (n--) *d++ = *s++;
    return dst;
}

void *faas_memset(void *dst, int c, size_t n) {
    uint8_t *d = dst;
    while (n--) *d++ = (uint8_t)c;
    return dst;
}

static uint8_t g_input[MAX_FRAME];
static uint8_t g_arena[ARENA_SIZE];
static size_t g_arena_used;

static void arena_reset(void) { g_arena_used = 0; }

static void *arena_alloc(size_t n) {
    size_t aligned = (n + 15u) & ~(size_t)15u;
    if (aligned < n || aligned > ARENA_SIZE - g_arena_used) return 0;
    void *p = g_arena + g_arena_used;
    g_arena_used += aligned;
    return p;
}

uint8_t *faas_scratch(int32_t n) {
    if (n < 0 || n > MAX_FRAME) return 0;
    return g_input;
}

static int str_eq(const char *a, int32_t an, const char *b) {
    int32_t i = 0;
    for (; i < an && b[i]; i++)
        if (a[i] != b[i]) return 0;
    return i == an && b[i] == 0;
}

static int32_t cstr_len(const char *s) {
    int32_t n = 0;
    while (s[n]) n++;
    return n;
}

/* ------------------------------------------------------------------ */
/* hashing and pseudorandom keystream                                    */

static uint64_t fnv1a64(const uint8_t *p, size_t n) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

__attribute__((unused)) static uint64_t splitmix64(uint64_t *state) {
    uint64_t z = (*state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/* ------------------------------------------------------------------ */
/* output buffer                                                        */

typedef struct {
    uint8_t *p;
    size_t len;
    size_t cap;
    int overflow;
} buf_t;

static void buf_init(buf_t *b, size_t cap) {
    b->p = arena_alloc(cap);
    b->len = 0;
    b->cap = b->p ? cap : 0;
    b->overflow = b->p == 0;
}

static void buf_put(buf_t *b, const void *s, size_t n) {
    if (b->overflow || n > b->cap - b->len) {
        b->overflow = 1;
        return;
    }
    faas_memcpy(b->p + b->len, s, n);
    b->len += n;
}

static void buf_str(buf_t *b, const char *s) { buf_put(b, s, (size_t)cstr_len(s)); }

static size_t u64_to_dec(uint64_t v, char *out) {
    char tmp[24];
    size_t n = 0;
    do {
        tmp[n++] = (char)('0' + v % 10);
        v /= 10;
    } while (v);
    for (size_t i = 0; i < n; i++) out[i] = tmp[n - 1 - i];
    return n;
}

static void buf_u64(buf_t *b, uint64_t v) {
    char d[24];
    buf_put(b, d, u64_to_dec(v, d));
}

static void buf_hex64(buf_t *b, uint64_t v) {
    static const char hx[] = "0123456789abcdef";
    char d[16];
    for (int i = 15; i >= 0; i--) {
        d[i] = hx[v & 15];
        v >>= 4;
    }
    buf_put(b, d, 16);
}

static void buf_json_str(buf_t *b, const uint8_t *s, size_t n) {
    static const char hx[] = "0123456789abcdef";
    buf_put(b, "\"", 1);
    for (size_t i = 0; i < n; i++) {
        uint8_t c = s[i];
        if (c == '"' || c == '\\') {
            char e[2] = {'\\', (char)c};
            buf_put(b, e, 2);
        } else if (c < 0x20 || c >= 0x7f) {
            char e[6] = {'\\', 'u', '0', '0', hx[c >> 4], hx[c & 15]};
            buf_put(b, e, 6);
        } else {
            buf_put(b, &c, 1);
        }
    }
    buf_put(b, "\"", 1);
}

/* ------------------------------------------------------------------ */
/* JSON request parsing                                                  */

typedef struct {
    const uint8_t *p;
    int32_t n;
    int escaped;
} jstr;

typedef struct {
    const uint8_t *p;
    const uint8_t *end;
    int depth;
} jcur;

typedef struct {
    jstr key;
    jstr val;
} param_t;

typedef struct {
    int has_workload;
    jstr workload;
    int64_t group;
    param_t params[MAX_PARAMS];
    int nparams;
    int has_payload;
    jstr payload_b64;
    int has_storage;
    jstr host;
    int64_t port;
    jstr key;
} request_t;

static void j_ws(jcur *c) {
    while (c->p < c->end && (*c->p == ' ' || *c->p == '\t' || *c->p == '\n' || *c->p == '\r')) c->p++;
}

static int j_lit(jcur *c, const char *lit) {
    int32_t n = cstr_len(lit);
    if (c->end - c->p < n) return 0;
    for (int32_t i = 0; i < n; i++)
        if (c->p[i] != (uint8_t)lit[i]) return 0;
    c->p += n;
    return 1;
}

static int j_string(jcur *c, jstr *out) {
    if (c->p >= c->end || *c->p != '"') return 0;
    c->p++;
    out->p = c->p;
    out->escaped = 0;
    while (c->p < c->end) {
        uint8_t ch = *c->p;
        if (ch == '"') {
            out->n = (int32_t)(c->p - out->p);
            c->p++;
            return 1;
        }
        if (ch < 0x20) return 0;
        if (ch == '\\') {
            out->escaped = 1;
            c->p++;
            if (c->p >= c->end) return 0;
            if (*c->p == 'u') {
                if (c->end - c->p < 5) return 0;
                c->p += 4;
            }
        }
        c->p++;
    }
    return 0;
}

/* Integer or decimal number; the value is returned only for integers. */
static int j_number(jcur *c, int64_t *out, int *is_int, jstr *raw) {
    const uint8_t *s = c->p;
    int neg = 0;
    int64_t v = 0;
    *is_int = 1;
    if (c->p < c->end && *c->p == '-') {
        neg = 1;
        c->p++;
    }
    if (c->p >= c->end || *c->p < '0' || *c->p > '9') return 0;
    while (c->p < c->end && *c->p >= '0' && *c->p <= '9') {
        if (v > (INT64_MAX - 9) / 10) *is_int = 0;
        v = v * 10 + (*c->p - '0');
        c->p++;
    }
    if (c->p < c->end && *c->p == '.') {
        *is_int = 0;
        c->p++;
        if (c->p >= c->end || *c->p < '0' || *c->p > '9') return 0;
        while (c->p < c->end && *c->p >= '0' && *c->p <= '9') c->p++;
    }
    if (c->p < c->end && (*c->p == 'e' || *c->p == 'E')) {
        *is_int = 0;
        c->p++;
        if (c->p < c->end && (*c->p == '+' || *c->p == '-')) c->p++;
        if (c->p >= c->end || *c->p < '0' || *c->p > '9') return 0;
        while (c->p < c->end && *c->p >= '0' && *c->p <= '9') c->p++;
    }
    *out = neg ? -v : v;
    if (raw) {
        raw->p = s;
        raw->n = (int32_t)(c->p - s);
        raw->escaped = 0;
    }
    return 1;
}

static int j_skip(jcur *c) {
    j_ws(c);
    if (c->p >= c->end) return 0;
    uint8_t ch = *c->p;
    if (ch == '"') {
        jstr s;
        return j_string(c, &s);
    }
    if (ch == '{' || ch == '[') {
        uint8_t close = ch == '{' ? '}' : ']';
        if (++c->depth > 64) return 0;
        c->p++;
        j_ws(c);
        if (c->p < c->end && *c->p == close) {
            c->p++;
            c->depth--;
            return 1;
        }
        for (;;) {
            if (ch == '{') {
                jstr k;
                j_ws(c);
                if (!j_string(c, &k)) return 0;
                j_ws(c);
                if (c->p >= c->end || *c->p != ':') return 0;
                c->p++;
            }
            if (!j_skip(c)) return 0;
            j_ws(c);
            if (c->p >= c->end) return 0;
            if (*c->p == ',') {
                c->p++;
                continue;
            }
            if (*c->p == close) {
                c->p++;
                c->depth--;
                return 1;
            }
            return 0;
        }
    }
    if (ch == 't') return j_lit(c, "true");
    if (ch == 'f') return j_lit(c, "false");
    if (ch == 'n') return j_lit(c, "null");
    int64_t v;
    int is_int;
    return j_number(c, &v, &is_int, 0);
}

/* Iterates "key": value pairs of an object, calling fn for each. */
typedef int (*member_fn)(jcur *c, jstr key, void *ctx);

static int j_object(jcur *c, member_fn fn, void *ctx) {
    j_ws(c);
    if (c->p >= c->end || *c->p != '{') return 0;
    c->p++;
    j_ws(c);
    if (c->p < c->end && *c->p == '}') {
        c->p++;
        return 1;
    }
    for (;;) {
        jstr k;
        j_ws(c);
        if (!j_string(c, &k)) return 0;
        j_ws(c);
        if (c->p >= c->end || *c->p != ':') return 0;
        c->p++;
        j_ws(c);
        if (!fn(c, k, ctx)) return 0;
        j_ws(c);
        if (c->p >= c->end) return 0;
        if (*c->p == ',') {
            c->p++;
            continue;
        }
        if (*c->p == '}') {
            c->p++;
            return 1;
        }
        return 0;
    }
}

static int hexval(uint8_t c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

static void put_utf8(uint8_t *d, int32_t *n, uint32_t cp) {
    if (cp < 0x80) {
        d[(*n)++] = (uint8_t)cp;
    } else if (cp < 0x800) {
        d[(*n)++] = (uint8_t)(0xc0 | (cp >> 6));
        d[(*n)++] = (uint8_t)(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        d[(*n)++] = (uint8_t)(0xe0 | (cp >> 12));
        d[(*n)++] = (uint8_t)(0x80 | ((cp >> 6) & 0x3f));
        d[(*n)++] = (uint8_t)(0x80 | (cp & 0x3f));
    } else {
        d[(*n)++] = (uint8_t)(0xf0 | (cp >> 18));
        d[(*n)++] = (uint8_t)(0x80 | ((cp >> 12) & 0x3f));
        d[(*n)++] = (uint8_t)(0x80 | ((cp >> 6) & 0x3f));
        d[(*n)++] = (uint8_t)(0x80 | (cp & 0x3f));
    }
}

static int read_u4(const uint8_t *p, uint32_t *out) {
    uint32_t v = 0;
    for (int i = 0; i < 4; i++) {
        int h = hexval(p[i]);
        if (h < 0) return 0;
        v = (v << 4) | (uint32_t)h;
    }
    *out = v;
    return 1;
}

/* Resolves escapes into arena memory; plain strings are returned as is. */
static int jstr_decode(jstr *s) {
    if (!s->escaped) return 1;
    uint8_t *d = arena_alloc((size_t)s->n + 1);
    if (!d) return 0;
    int32_t n = 0;
    for (int32_t i = 0; i < s->n; i++) {
        uint8_t ch = s->p[i];
        if (ch != '\\') {
            d[n++] = ch;
            continue;
        }
        ch = s->p[++i];
        switch (ch) {
        case 'b': d[n++] = '\b'; break;
        case 'f': d[n++] = '\f'; break;
        case 'n': d[n++] = '\n'; break;
        case 'r': d[n++] = '\r'; break;
        case 't': d[n++] = '\t'; break;
        case 'u': {
            uint32_t cp;
            if (i + 4 >= s->n) return 0;
            if (!read_u4(s->p + i + 1, &cp)) return 0;
            i += 4;
            if (cp >= 0xd800 && cp < 0xdc00 && i + 6 < s->n && s->p[i + 1] == '\\' && s->p[i + 2] == 'u') {
                uint32_t lo;
                if (read_u4(s->p + i + 3, &lo) && lo >= 0xdc00 && lo < 0xe000) {
                    cp = 0x10000 + ((cp - 0xd800) << 10) + (lo - 0xdc00);
                    i += 6;
                }
            }
            put_utf8(d, &n, cp);
            break;
        }
        default: d[n++] = ch; break;
        }
    }
    s->p = d;
    s->n = n;
    s->escaped = 0;
    return 1;
}

static int on_param(jcur *c, jstr key, void *ctx) {
    request_t *r = ctx;
    jstr val;
    if (c->p < c->end && *c->p == '"') {
        if (!j_string(c, &val)) return 0;
    } else {
        int64_t v;
        int is_int;
        if (!j_number(c, &v, &is_int, &val)) return 0;
    }
    if (r->nparams >= MAX_PARAMS) return 0;
    if (!jstr_decode(&key) || !jstr_decode(&val)) return 0;
    r->params[r->nparams].key = key;
    r->params[r->nparams].val = val;
    r->nparams++;
    return 1;
}

static int on_storage(jcur *c, jstr key, void *ctx) {
    request_t *r = ctx;
    int is_int;
    if (!jstr_decode(&key)) return 0;
    if (str_eq((const char *)key.p, key.n, "host")) return j_string(c, &r->host) && jstr_decode(&r->host);
    if (str_eq((const char *)key.p, key.n, "key")) return j_string(c, &r->key) && jstr_decode(&r->key);
    if (str_eq((const char *)key.p, key.n, "port")) return j_number(c, &r->port, &is_int, 0) && is_int;
    return j_skip(c);
}

static int on_top(jcur *c, jstr key, void *ctx) {
    request_t *r = ctx;
    int is_int;
    if (!jstr_decode(&key)) return 0;
    const char *k = (const char *)key.p;
    if (str_eq(k, key.n, "workload")) {
        r->has_workload = 1;
        return j_string(c, &r->workload) && jstr_decode(&r->workload);
    }
    if (str_eq(k, key.n, "group")) {
        if (j_lit(c, "null")) return 1;
        return j_number(c, &r->group, &is_int, 0) && is_int;
    }
    if (str_eq(k, key.n, "params")) {
        if (j_lit(c, "null")) return 1;
        return j_object(c, on_param, r);
    }
    if (str_eq(k, key.n, "payload_b64")) {
        if (j_lit(c, "null")) return 1;
        r->has_payload = 1;
        return j_string(c, &r->payload_b64) && jstr_decode(&r->payload_b64);
    }
    if (str_eq(k, key.n, "storage")) {
        if (j_lit(c, "null")) return 1;
        r->has_storage = 1;
        r->port = -1;
        return j_object(c, on_storage, r);
    }
    return j_skip(c);
}

static const param_t *param_get(const request_t *r, const char *name) {
    for (int i = 0; i < r->nparams; i++)
        if (str_eq((const char *)r->params[i].key.p, r->params[i].key.n, name)) return &r->params[i];
    return 0;
}

static int parse_u64(jstr s, uint64_t *out) {
    uint64_t v = 0;
    if (s.n == 0) return 0;
    for (int32_t i = 0; i < s.n; i++) {
        if (s.p[i] < '0' || s.p[i] > '9') return 0;
        uint64_t d = (uint64_t)(s.p[i] - '0');
        if (v > (UINT64_MAX - d) / 10) return 0;
        v = v * 10 + d;
    }
    *out = v;
    return 1;
}

/* ------------------------------------------------------------------ */
/* base64                                                                */

static int b64_val(uint8_t c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

__attribute__((unused)) static int b64_decode(const uint8_t *s, int32_t n, uint8_t **out, size_t *out_len) {
    if (n % 4 != 0) return 0;
    size_t cap = (size_t)n / 4 * 3;
    uint8_t *d = arena_alloc(cap + 1);
    if (!d) return 0;
    size_t k = 0;
    for (int32_t i = 0; i < n; i += 4) {
        int a = b64_val(s[i]), b = b64_val(s[i + 1]);
        if (a < 0 || b < 0) return 0;
        int last = i + 4 == n;
        if (last && s[i + 2] == '=') {
            if (s[i + 3] != '=') return 0;
            d[k++] = (uint8_t)((a << 2) | (b >> 4));
            break;
        }
        int c = b64_val(s[i + 2]);
        if (c < 0) return 0;
        if (last && s[i + 3] == '=') {
            d[k++] = (uint8_t)((a << 2) | (b >> 4));
            d[k++] = (uint8_t)(((b & 15) << 4) | (c >> 2));
            break;
        }
        int e = b64_val(s[i + 3]);
        if (e < 0) return 0;
        d[k++] = (uint8_t)((a << 2) | (b >> 4));
        d[k++] = (uint8_t)(((b & 15) << 4) | (c >> 2));
        d[k++] = (uint8_t)(((c & 3) << 6) | e);
    }
    *out = d;
    *out_len = k;
    return 1;
}

/* ------------------------------------------------------------------ */
/* storage client                                                        */

#define KV_GET 0
#define KV_PUT 1
#define KV_OK 0
#define KV_NOT_FOUND 1

static void be32(uint8_t *p, uint32_t v) {
    p[0] = (uint8_t)(v >> 24);
    p[1] = (uint8_t)(v >> 16);
    p[2] = (uint8_t)(v >> 8);
    p[3] = (uint8_t)v;
}

static uint32_t rd32(const uint8_t *p) {
    return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) | p[3];
}

static int send_all(int32_t h, const uint8_t *p, size_t n) {
    while (n) {
        int32_t chunk = n > (1u << 20) ? (1 << 20) : (int32_t)n;
        int32_t w = plat_sock_send(h, p, chunk);
        if (w <= 0) return 0;
        p += w;
        n -= (size_t)w;
    }
    return 1;
}

static int recv_all(int32_t h, uint8_t *p, size_t n) {
    while (n) {
        int32_t chunk = n > (1u << 20) ? (1 << 20) : (int32_t)n;
        int32_t r = plat_sock_recv(h, p, chunk);
        if (r <= 0) return 0;
        p += r;
        n -= (size_t)r;
    }
    return 1;
}

/* Returns KV status (>=0) or -1 on transport failure. */
static int kv_call(const request_t *r, uint8_t op, jstr key, const uint8_t *val, size_t val_len,
                   uint8_t **out, size_t *out_len) {
    if (r->port <= 0 || r->port > 65535 || key.n > MAX_KEY) return -1;
    int32_t h = plat_sock_connect((const char *)r->host.p, r->host.n, (int32_t)r->port);
    if (h < 0) return -1;
    uint8_t hdr[5 + 4 + MAX_KEY];
    hdr[0] = op;
    be32(hdr + 1, (uint32_t)key.n);
    faas_memcpy(hdr + 5, key.p, (size_t)key.n);
    be32(hdr + 5 + key.n, (uint32_t)val_len);
    int ok = send_all(h, hdr, (size_t)(9 + key.n)) && send_all(h, val, val_len);
    uint8_t rh[5];
    if (!ok || !recv_all(h, rh, 5)) {
        plat_sock_close(h);
        return -1;
    }
    uint32_t n = rd32(rh + 1);
    uint8_t *d = arena_alloc((size_t)n + 1);
    if (!d || !recv_all(h, d, n)) {
        plat_sock_close(h);
        return -1;
    }
    plat_sock_close(h);
    if (out) {
        *out = d;
        *out_len = n;
    }
    return rh[0];
}

/* ------------------------------------------------------------------ */
/* kernels                                                               */

typedef struct {
    const char *code;
    const char *message;
} faas_err_t;

typedef struct {
    const uint8_t *in;
    size_t in_len;
    uint64_t size;
    const request_t *req;
    uint8_t *out;
    size_t out_len;
    faas_err_t err;
} job_t;

#if WORKLOAD_ID == W_FIB
static int kernel(job_t *j) {
    uint64_t a = 0, b = 1;
    for (uint64_t i = 0; i < j->size; i++) {
        uint64_t t = a + b;
        a = b;
        b = t;
    }
    j->out = arena_alloc(24);
    if (!j->out) return 0;
    j->out_len = u64_to_dec(a, (char *)j->out);
    return 1;
}
#endif

#if WORKLOAD_ID == W_PRIMES
static int kernel(job_t *j) {
    uint64_t limit = j->size;
    uint64_t count = 0;
    if (limit >= 2) {
        uint8_t *comp = arena_alloc((size_t)limit + 1);
        if (!comp) {
            j->err.code = "invalid-params";
            j->err.message = "limit too large";
            return 0;
        }
        faas_memset(comp, 0, (size_t)limit + 1);
        for (uint64_t i = 2; i * i <= limit; i++)
            if (!comp[i])
                for (uint64_t m = i * i; m <= limit; m += i) comp[m] = 1;
        for (uint64_t i = 2; i <= limit; i++) count += !comp[i];
    }
    j->out = arena_alloc(24);
    if (!j->out) return 0;
    j->out_len = u64_to_dec(count, (char *)j->out);
    return 1;
}
#endif

#if WORKLOAD_ID == W_MANDEL
static uint64_t isqrt64(uint64_t v) {
    uint64_t r = 0, bit = 1ull << 62;
    while (bit > v) bit >>= 2;
    while (bit) {
        if (v >= r + bit) {
            v -= r + bit;
            r = (r >> 1) + bit;
        } else {
            r >>= 1;
        }
        bit >>= 2;
    }
    return r;
}

static int kernel(job_t *j) {
    uint64_t side = isqrt64(j->size);
    size_t n = (size_t)(side * side);
    uint8_t *img = arena_alloc(n ? n : 1);
    if (!img) {
        j->err.code = "invalid-params";
        j->err.message = "bitmap too large";
        return 0;
    }
    double span = side > 1 ? (double)(side - 1) : 1.0;
    for (uint64_t y = 0; y < side; y++) {
        double ci = -1.5 + 3.0 * (double)y / span;
        for (uint64_t x = 0; x < side; x++) {
            double cr = -2.0 + 3.0 * (double)x / span;
            double zr = 0.0, zi = 0.0;
            int it = 0;
            while (it < 255 && zr * zr + zi * zi <= 4.0) {
                double t = zr * zr - zi * zi + cr;
                zi = 2.0 * zr * zi + ci;
                zr = t;
                it++;
            }
            img[y * side + x] = (uint8_t)it;
        }
    }
    j->out = img;
    j->out_len = n;
    return 1;
}
#endif

#if WORKLOAD_ID == W_AUDIO
#define SAMPLE_RATE 44100u
#define TONE_HZ 440u
#define AMPLITUDE 30000.0
#define HALF_PI 1.57079632679489661923

/* Taylor series on [0, pi/2]; identical IEEE operations on every target. */
static double sin_q(double x) {
    double x2 = x * x, term = x, sum = x;
    for (int k = 1; k <= 8; k++) {
        term = -term * x2 / (double)((2 * k) * (2 * k + 1));
        sum += term;
    }
    return sum;
}

static double cos_q(double x) {
    double x2 = x * x, term = 1.0, sum = 1.0;
    for (int k = 1; k <= 9; k++) {
        term = -term * x2 / (double)((2 * k - 1) * (2 * k));
        sum += term;
    }
    return sum;
}

/* sin(2*pi*phase/SAMPLE_RATE) for integer phase in [0, SAMPLE_RATE). */
static double sin_phase(uint32_t phase) {
    uint32_t quarter = SAMPLE_RATE / 4;
    uint32_t q = phase / quarter, r = phase % quarter;
    double x = HALF_PI * (double)r / (double)quarter;
    switch (q) {
    case 0: return sin_q(x);
    case 1: return cos_q(x);
    case 2: return -sin_q(x);
    default: return -cos_q(x);
    }
}

static void le16(uint8_t *p, uint16_t v) {
    p[0] = (uint8_t)v;
    p[1] = (uint8_t)(v >> 8);
}

static void le32(uint8_t *p, uint32_t v) {
    le16(p, (uint16_t)v);
    le16(p + 2, (uint16_t)(v >> 16));
}

static int kernel(job_t *j) {
    uint64_t total = j->size;
    if (total < 44) {
        j->err.code = "invalid-params";
        j->err.message = "size must be at least 44 bytes";
        return 0;
    }
    uint8_t *o = arena_alloc((size_t)total);
    if (!o || total > 0xffffffffull) {
        j->err.code = "invalid-params";
        j->err.message = "size too large";
        return 0;
    }
    uint32_t data = (uint32_t)(total - 44);
    faas_memcpy(o, "RIFF", 4);
    le32(o + 4, (uint32_t)(total - 8));
    faas_memcpy(o + 8, "WAVEfmt ", 8);
    le32(o + 16, 16);
    le16(o + 20, 1);
    le16(o + 22, 1);
    le32(o + 24, SAMPLE_RATE);
    le32(o + 28, SAMPLE_RATE * 2);
    le16(o + 32, 2);
    le16(o + 34, 16);
    faas_memcpy(o + 36, "data", 4);
    le32(o + 40, data);
    uint32_t samples = data / 2;
    uint32_t phase = 0;
    for (uint32_t k = 0; k < samples; k++) {
        double v = AMPLITUDE * sin_phase(phase);
        int32_t s = v >= 0.0 ? (int32_t)(v + 0.5) : -(int32_t)(-v + 0.5);
        le16(o + 44 + 2 * (size_t)k, (uint16_t)(int16_t)s);
        phase += TONE_HZ;
        if (phase >= SAMPLE_RATE) phase -= SAMPLE_RATE;
    }
    if (data & 1) o[total - 1] = 0;
    j->out = o;
    j->out_len = (size_t)total;
    return 1;
}
#endif

#if WORKLOAD_ID == W_ENCRYPT || WORKLOAD_ID == W_DECRYPT
/* XOR with a keyed keystream, so decryption is the same transform. */
static int kernel(job_t *j) {
    const param_t *k = param_get(j->req, "key");
    if (!k || k->val.n == 0) {
        j->err.code = "invalid-params";
        j->err.message = "key must be nonempty";
        return 0;
    }
    uint64_t state = fnv1a64(k->val.p, (size_t)k->val.n);
    uint8_t *o = arena_alloc(j->in_len + 1);
    if (!o) return 0;
    size_t i = 0;
    while (i < j->in_len) {
        uint64_t ks = splitmix64(&state);
        for (int b = 0; b < 8 && i < j->in_len; b++, i++) {
            o[i] = j->in[i] ^ (uint8_t)ks;
            ks >>= 8;
        }
    }
    j->out = o;
    j->out_len = j->in_len;
    return 1;
}
#endif

#if WORKLOAD_ID == W_FUZZY
#define MAX_QUERY 1024

static int is_space(uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

static uint32_t levenshtein(const uint8_t *a, size_t an, const uint8_t *b, size_t bn, uint32_t *row) {
    for (size_t i = 0; i <= an; i++) row[i] = (uint32_t)i;
    for (size_t jx = 1; jx <= bn; jx++) {
        uint32_t diag = row[0];
        row[0] = (uint32_t)jx;
        for (size_t i = 1; i <= an; i++) {
            uint32_t up = row[i];
            uint32_t best = diag + (a[i - 1] != b[jx - 1]);
            if (up + 1 < best) best = up + 1;
            if (row[i - 1] + 1 < best) best = row[i - 1] + 1;
            diag = up;
            row[i] = best;
        }
    }
    return row[an];
}

static int kernel(job_t *j) {
    const param_t *q = param_get(j->req, "query");
    const param_t *md = param_get(j->req, "max_dist");
    uint64_t max_dist = 2;
    if (!q || q->val.n == 0 || q->val.n > MAX_QUERY || (md && !parse_u64(md->val, &max_dist))) {
        j->err.code = "invalid-params";
        j->err.message = "query must be nonempty and max_dist an integer";
        return 0;
    }
    uint32_t *row = arena_alloc(sizeof(uint32_t) * ((size_t)q->val.n + 1));
    if (!row) return 0;
    uint64_t hits = 0;
    size_t i = 0;
    while (i < j->in_len) {
        while (i < j->in_len && is_space(j->in[i])) i++;
        size_t s = i;
        while (i < j->in_len && !is_space(j->in[i])) i++;
        if (i > s && levenshtein(q->val.p, (size_t)q->val.n, j->in + s, i - s, row) <= max_dist) hits++;
    }
    j->out = arena_alloc(24);
    if (!j->out) return 0;
    j->out_len = u64_to_dec(hits, (char *)j->out);
    return 1;
}
#endif

#if WORKLOAD_ID == W_LANG
#include "lang_samples.h"

#define NSYM 27
#define NTRI (NSYM * NSYM * NSYM)
#define TOP_K 300
#define NLANG (sizeof(LANG_TAGS) / sizeof(LANG_TAGS[0]))

static int16_t g_rank[NLANG][NTRI];
static uint32_t g_counts[NTRI];
static uint16_t g_order[NTRI];

static uint8_t sym(uint8_t c) {
    if (c >= 'A' && c <= 'Z') c = (uint8_t)(c - 'A' + 'a');
    return c >= 'a' && c <= 'z' ? (uint8_t)(c - 'a' + 1) : 0;
}

/* Counts trigrams over the letter stream with non-letter runs folded to one space. */
static void count_trigrams(const uint8_t *t, size_t n, uint32_t *counts) {
    faas_memset(counts, 0, sizeof(uint32_t) * NTRI);
    uint32_t a = 0, b = 0;
    int have = 1;
    for (size_t i = 0; i <= n; i++) {
        uint32_t s = i < n ? sym(t[i]) : 0;
        if (s == 0 && b == 0) continue;
        if (have >= 2) counts[(a * NSYM + b) * NSYM + s]++;
        a = b;
        b = s;
        if (have < 2) have++;
    }
}

static int before(const uint32_t *counts, uint16_t x, uint16_t y) {
    return counts[x] > counts[y] || (counts[x] == counts[y] && x < y);
}

static void sift(uint16_t *h, const uint32_t *counts, size_t i, size_t n) {
    for (;;) {
        size_t l = 2 * i + 1, m = i;
        if (l < n && before(counts, h[m], h[l])) m = l;
        if (l + 1 < n && before(counts, h[m], h[l + 1])) m = l + 1;
        if (m == i) return;
        uint16_t t = h[i];
        h[i] = h[m];
        h[m] = t;
        i = m;
    }
}

/* Fills order with nonzero trigrams, most frequent first; returns how many. */
static size_t rank_trigrams(const uint32_t *counts, uint16_t *order) {
    size_t n = 0;
    for (uint32_t t = 0; t < NTRI; t++)
        if (counts[t]) order[n++] = (uint16_t)t;
    for (size_t i = n / 2; i-- > 0;) sift(order, counts, i, n);
    for (size_t e = n; e > 1; e--) {
        uint16_t t = order[0];
        order[0] = order[e - 1];
        order[e - 1] = t;
        sift(order, counts, 0, e - 1);
    }
    /* heap order is "worst first" under before(); reverse it */
    for (size_t i = 0; i < n / 2; i++) {
        uint16_t t = order[i];
        order[i] = order[n - 1 - i];
        order[n - 1 - i] = t;
    }
    return n;
}

void faas_init(void) {
    for (size_t l = 0; l < NLANG; l++) {
        const uint8_t *s = (const uint8_t *)LANG_SAMPLES[l];
        count_trigrams(s, (size_t)cstr_len(LANG_SAMPLES[l]), g_counts);
        size_t n = rank_trigrams(g_counts, g_order);
        for (uint32_t t = 0; t < NTRI; t++) g_rank[l][t] = -1;
        for (size_t r = 0; r < n && r < TOP_K; r++) g_rank[l][g_order[r]] = (int16_t)r;
    }
}

static int kernel(job_t *j) {
    if (j->in_len < 3) {
        j->err.code = "insufficient-input";
        j->err.message = "text shorter than 3 bytes";
        return 0;
    }
    count_trigrams(j->in, j->in_len, g_counts);
    size_t n = rank_trigrams(g_counts, g_order);
    if (n > TOP_K) n = TOP_K;
    uint64_t best = UINT64_MAX;
    size_t best_l = 0;
    for (size_t l = 0; l < NLANG; l++) {
        uint64_t d = 0;
        for (size_t r = 0; r < n; r++) {
            int16_t q = g_rank[l][g_order[r]];
            d += q < 0 ? TOP_K : (q > (int16_t)r ? (uint64_t)(q - (int16_t)r) : (uint64_t)((int16_t)r - q));
        }
        if (d < best) {
            best = d;
            best_l = l;
        }
    }
    j->out = (uint8_t *)LANG_TAGS[best_l];
    j->out_len = (size_t)cstr_len(LANG_TAGS[best_l]);
    return 1;
}
#else
void faas_init(void) {}
#endif

/* ------------------------------------------------------------------ */
/* request handling                                                      */

typedef struct {
    int64_t io_fetch, deserialize, compute, serialize, io_store;
} phases_t;

static char g_instance_id[128];
static int32_t g_instance_len;

static int32_t finish(buf_t *b, const faas_err_t *err, const job_t *j, uint64_t digest, const phases_t *ph,
                      int64_t t_start) {
    buf_str(b, "{\"status\":");
    if (err) {
        buf_str(b, "\"error\",\"error\":{\"code\":");
        buf_json_str(b, (const uint8_t *)err->code, (size_t)cstr_len(err->code));
        buf_str(b, ",\"message\":");
        buf_json_str(b, (const uint8_t *)err->message, (size_t)cstr_len(err->message));
        buf_str(b, "},\"output_len\":0,\"output_digest\":null,\"result\":null");
    } else {
        buf_str(b, "\"ok\",\"error\":null,\"output_len\":");
        buf_u64(b, j->out_len);
        buf_str(b, ",\"output_digest\":\"");
        buf_hex64(b, digest);
        buf_str(b, "\",\"result\":");
        if (TEXT_RESULT)
            buf_json_str(b, j->out, j->out_len);
        else
            buf_str(b, "null");
    }
    buf_str(b, ",\"workload\":\"" WORKLOAD_NAME "\",\"instance_id\":");
    buf_json_str(b, (const uint8_t *)g_instance_id, (size_t)g_instance_len);
    buf_str(b, ",\"phases\":{\"io_fetch_ns\":");
    buf_u64(b, (uint64_t)ph->io_fetch);
    buf_str(b, ",\"deserialize_ns\":");
    buf_u64(b, (uint64_t)ph->deserialize);
    buf_str(b, ",\"compute_ns\":");
    buf_u64(b, (uint64_t)ph->compute);
    buf_str(b, ",\"serialize_ns\":");
    buf_u64(b, (uint64_t)ph->serialize);
    buf_str(b, ",\"io_store_ns\":");
    buf_u64(b, (uint64_t)ph->io_store);
    buf_str(b, "},\"server_total_ns\":");
    int64_t total = plat_clock_ns() - t_start;
    buf_u64(b, (uint64_t)(total < 0 ? 0 : total));
    buf_str(b, "}");
    return b->overflow ? -1 : (int32_t)b->len;
}

static int64_t elapsed(int64_t t0) {
    int64_t d = plat_clock_ns() - t0;
    return d < 0 ? 0 : d;
}

int32_t faas_handle(const uint8_t *reqp, int32_t req_len, uint8_t **resp) {
    int64_t t_start = plat_clock_ns();
    arena_reset();
    buf_t out;
    buf_init(&out, 8192);
    *resp = out.p;
    phases_t ph = {0, 0, 0, 0, 0};
    faas_err_t err = {0, 0};
    job_t job;
    faas_memset(&job, 0, sizeof job);

    static request_t req;
    faas_memset(&req, 0, sizeof req);
    req.group = 0;
    int64_t t0 = plat_clock_ns();
    jcur c = {reqp, reqp + req_len, 0};
    int parsed = j_object(&c, on_top, &req);
    if (parsed) {
        j_ws(&c);
        parsed = c.p == c.end;
    }
    if (!parsed || !req.has_workload) {
        err.code = "bad-request";
        err.message = "malformed request document";
        ph.deserialize = elapsed(t0);
        return finish(&out, &err, 0, 0, &ph, t_start);
    }
    if (!str_eq((const char *)req.workload.p, req.workload.n, WORKLOAD_NAME)) {
        err.code = "unknown-workload";
        err.message = "this instance serves " WORKLOAD_NAME;
        ph.deserialize = elapsed(t0);
        return finish(&out, &err, 0, 0, &ph, t_start);
    }
    job.req = &req;

    /* size parameter: explicit param wins over the payload group table */
    int size_ok = 1;
    const param_t *sp = param_get(&req, INTEGER_WORKLOAD ? "n" : "size");
    if (sp) {
        size_ok = parse_u64(sp->val, &job.size);
    } else if (req.group >= 1 && req.group <= 3) {
        job.size = INTEGER_WORKLOAD ? GROUP_INTS[req.group - 1] : GROUP_BYTES[req.group - 1];
    } else if (INTEGER_WORKLOAD || GENERATOR_WORKLOAD) {
        size_ok = 0;
    }
    if (!size_ok) {
        err.code = "invalid-params";
        err.message = INTEGER_WORKLOAD ? "n must be a nonnegative integer" : "size must be a nonnegative integer";
        ph.deserialize = elapsed(t0);
        return finish(&out, &err, 0, 0, &ph, t_start);
    }
    const param_t *so = param_get(&req, "store_output");
    int store_output = GENERATOR_WORKLOAD ? req.has_storage : (req.has_storage && so && str_eq((const char *)so->val.p, so->val.n, "1"));
    if (req.has_storage && (req.host.n == 0 || req.key.n == 0 || req.key.n > MAX_KEY - 4 || req.port <= 0)) {
        err.code = "invalid-params";
        err.message = "storage needs host, port and key";
        ph.deserialize = elapsed(t0);
        return finish(&out, &err, 0, 0, &ph, t_start);
    }

#if !INTEGER_WORKLOAD && !GENERATOR_WORKLOAD
    if (req.has_payload == req.has_storage) {
        err.code = "invalid-params";
        err.message = "exactly one of payload_b64 and storage is required";
        ph.deserialize = elapsed(t0);
        return finish(&out, &err, 0, 0, &ph, t_start);
    }
    if (req.has_payload) {
        uint8_t *d;
        size_t dn;
        if (!b64_decode(req.payload_b64.p, req.payload_b64.n, &d, &dn)) {
            err.code = "bad-request";
            err.message = "payload_b64 is not valid base64";
            ph.deserialize = elapsed(t0);
            return finish(&out, &err, 0, 0, &ph, t_start);
        }
        job.in = d;
        job.in_len = dn;
    }
    ph.deserialize = elapsed(t0);
    if (req.has_storage) {
        t0 = plat_clock_ns();
        uint8_t *d = 0;
        size_t dn = 0;
        int st = kv_call(&req, KV_GET, req.key, 0, 0, &d, &dn);
        ph.io_fetch = elapsed(t0);
        if (st != KV_OK) {
            err.code = st == KV_NOT_FOUND ? "storage-not-found" : "storage-error";
            err.message = st == KV_NOT_FOUND ? "input key not found" : "storage request failed";
            return finish(&out, &err, 0, 0, &ph, t_start);
        }
        job.in = d;
        job.in_len = dn;
    }
#else
    ph.deserialize = elapsed(t0);
#endif

    t0 = plat_clock_ns();
    int ok = kernel(&job);
    ph.compute = elapsed(t0);
    if (!ok) {
        if (!job.err.code) {
            job.err.code = "resource-exhausted";
            job.err.message = "arena exhausted";
        }
        return finish(&out, &job.err, 0, 0, &ph, t_start);
    }

    t0 = plat_clock_ns();
    uint64_t digest = fnv1a64(job.out, job.out_len);
    ph.serialize = elapsed(t0);

    if (store_output) {
        t0 = plat_clock_ns();
        jstr okey = req.key;
        if (!GENERATOR_WORKLOAD) {
            uint8_t *k = arena_alloc((size_t)req.key.n + 4);
            if (!k) {
                err.code = "resource-exhausted";
                err.message = "arena exhausted";
                return finish(&out, &err, 0, 0, &ph, t_start);
            }
            faas_memcpy(k, req.key.p, (size_t)req.key.n);
            faas_memcpy(k + req.key.n, ".out", 4);
            okey.p = k;
            okey.n = req.key.n + 4;
        }
        int st = kv_call(&req, KV_PUT, okey, job.out, job.out_len, 0, 0);
        ph.io_store = elapsed(t0);
        if (st != KV_OK) {
            err.code = "storage-error";
            err.message = "storing output failed";
            return finish(&out, &err, 0, 0, &ph, t_start);
        }
    }
    return finish(&out, 0, &job, digest, &ph, t_start);
}

/* ------------------------------------------------------------------ */
/* serve loop                                                            */

static int read_exact(uint8_t *p, size_t n) {
    while (n) {
        int32_t chunk = n > (1u << 20) ? (1 << 20) : (int32_t)n;
        int32_t r = plat_read(p, chunk);
        if (r <= 0) return 0;
        p += r;
        n -= (size_t)r;
    }
    return 1;
}

static int write_exact(const uint8_t *p, size_t n) {
    while (n) {
        int32_t w = plat_write(p, (int32_t)n);
        if (w <= 0) return 0;
        p += w;
        n -= (size_t)w;
    }
    return 1;
}

static int write_frame(const uint8_t *p, int32_t n) {
    uint8_t hdr[4];
    be32(hdr, (uint32_t)n);
    return write_exact(hdr, 4) && write_exact(p, (size_t)n);
}

static int32_t error_frame(const char *code, const char *message) {
    static uint8_t tmp[512];
    buf_t b = {tmp, 0, sizeof tmp, 0};
    buf_str(&b, "{\"status\":\"error\",\"error\":{\"code\":\"");
    buf_str(&b, code);
    buf_str(&b, "\",\"message\":\"");
    buf_str(&b, message);
    buf_str(&b, "\"},\"output_len\":0,\"output_digest\":null,\"result\":null,\"workload\":\"" WORKLOAD_NAME
                "\",\"phases\":{\"io_fetch_ns\":0,\"deserialize_ns\":0,\"compute_ns\":0,"
                "\"serialize_ns\":0,\"io_store_ns\":0},\"server_total_ns\":0}");
    return write_frame(b.p, (int32_t)b.len) ? 0 : -1;
}

int32_t faas_serve(void) {
    static const char var[] = "LUMOS_INSTANCE_ID";
    g_instance_len = plat_env(var, (int32_t)(sizeof var - 1), g_instance_id, (int32_t)sizeof g_instance_id);
    if (g_instance_len < 0) {
        faas_memcpy(g_instance_id, "anonymous", 9);
        g_instance_len = 9;
    }
    faas_init();
    uint8_t line[160];
    faas_memcpy(line, "READY ", 6);
    faas_memcpy(line + 6, g_instance_id, (size_t)g_instance_len);
    line[6 + g_instance_len] = '\n';
    plat_ready(line, 7 + g_instance_len);

    for (;;) {
        uint8_t hdr[4];
        if (!read_exact(hdr, 4)) return 0;
        uint32_t n = rd32(hdr);
        if (n > MAX_FRAME) {
            while (n) {
                uint32_t chunk = n > MAX_FRAME ? MAX_FRAME : n;
                if (!read_exact(g_input, chunk)) return 0;
                n -= chunk;
            }
            if (error_frame("frame-too-large", "request frame exceeds limit") < 0) return 1;
            continue;
        }
        if (!read_exact(g_input, n)) return 0;
        uint8_t *resp;
        int32_t rn = faas_handle(g_input, (int32_t)n, &resp);
        if (rn < 0) {
            if (error_frame("internal", "response buffer overflow") < 0) return 1;
            continue;
        }
        if (!write_frame(resp, rn)) return 1;
    }
}
