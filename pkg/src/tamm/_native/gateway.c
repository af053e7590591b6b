/*
 * Host gateway: embeds a CPython interpreter and exports the classic
 * GEMM entry points so C, Fortran, or FFI hosts (e.g. node) can run the
 * tailored kernels without speaking Python.
 *
 * Exported symbols:
 *   sgemm_, dgemm_            Fortran contract: column-major, args by pointer
 *   cblas_sgemm, cblas_dgemm  CBLAS contract: void return, enum ints
 *   tamm_cblas_sgemm, tamm_cblas_dgemm  same, returning a status code
 *   tamm_config_report        resolved kernel descriptor -> caller buffer
 *   tamm_last_error           message for the most recent failure
 *   tamm_gateway_ping         initializes the interpreter, returns 42
 *
 * Status codes: 0 ok, 1-based parameter index for argument errors
 * (xerbla style), -1 for runtime failures (see tamm_last_error).
 *
 * Build: python -m tamm.cli gateway-build  (or gcc -shared -fPIC
 * gateway.c -o libtammgw.so $(python3-config --includes --ldflags) -lpython3.X)
 */

#define PY_SSIZE_T_CLEAN
#include <Python.h>

#include <dlfcn.h>
#include <pthread.h>
#include <stdint.h>
#include <stdio.h>
#include <string.h>

#define STRINGIFY_(x) #x
#define STRINGIFY(x) STRINGIFY_(x)

static pthread_once_t g_once = PTHREAD_ONCE_INIT;
static pthread_mutex_t g_err_lock = PTHREAD_MUTEX_INITIALIZER;
static char g_last_error[2048];

static void set_last_error(const char *msg)
{
    pthread_mutex_lock(&g_err_lock);
    snprintf(g_last_error, sizeof g_last_error, "%s", msg ? msg : "");
    pthread_mutex_unlock(&g_err_lock);
}

/* When this library is dlopen'ed by a non-Python host (RTLD_LOCAL is the
 * default), libpython arrives as a dependency with local visibility, and
 * extension modules imported later (which deliberately leave their
 * Py* symbols undefined) fail to resolve them.  Re-open libpython with
 * RTLD_GLOBAL to promote its symbols into the global scope; inside a
 * Python host this is a no-op. */
static void promote_libpython(void)
{
    const char *names[] = {
        "libpython" STRINGIFY(PY_MAJOR_VERSION) "." STRINGIFY(PY_MINOR_VERSION) ".so.1.0",
        "libpython" STRINGIFY(PY_MAJOR_VERSION) "." STRINGIFY(PY_MINOR_VERSION) ".so",
    };
    for (size_t i = 0; i < sizeof names / sizeof names[0]; i++) {
        /* Already a dependency of this library, so NOLOAD normally
         * succeeds and only flips the visibility flag. */
        if (dlopen(names[i], RTLD_LAZY | RTLD_GLOBAL | RTLD_NOLOAD))
            return;
    }
    for (size_t i = 0; i < sizeof names / sizeof names[0]; i++) {
        if (dlopen(names[i], RTLD_LAZY | RTLD_GLOBAL))
            return;
    }
}

static void init_python(void)
{
    if (!Py_IsInitialized()) {
        promote_libpython();
        Py_InitializeEx(0);
        /* Drop the GIL acquired by initialization; every entry point
         * re-acquires it through PyGILState_Ensure. */
        PyEval_SaveThread();
    }
}

/* Calls tamm.gateway.<fn>(*args); expects an (rc, message) pair back.
 * Assumes the GIL is held; consumes the args reference. */
static int run_gateway(const char *fn, PyObject *args)
{
    int rc = -1;
    PyObject *mod = NULL, *cb = NULL, *res = NULL;

    if (!args)
        goto done;
    mod = PyImport_ImportModule("tamm.gateway");
    if (!mod)
        goto done;
    cb = PyObject_GetAttrString(mod, fn);
    if (!cb)
        goto done;
    res = PyObject_CallObject(cb, args);
    if (!res)
        goto done;
    if (PyTuple_Check(res) && PyTuple_GET_SIZE(res) == 2) {
        rc = (int)PyLong_AsLong(PyTuple_GET_ITEM(res, 0));
        const char *msg = PyUnicode_AsUTF8(PyTuple_GET_ITEM(res, 1));
        set_last_error(msg);
        if (PyErr_Occurred()) {
            PyErr_Clear();
            rc = -1;
        }
    } else {
        set_last_error("gateway returned an unexpected result shape");
    }

done:
    if (PyErr_Occurred()) {
        PyObject *type, *value, *trace;
        PyErr_Fetch(&type, &value, &trace);
        PyObject *text = value ? PyObject_Str(value) : NULL;
        const char *msg = text ? PyUnicode_AsUTF8(text) : NULL;
        set_last_error(msg ? msg : "python error");
        Py_XDECREF(text);
        Py_XDECREF(type);
        Py_XDECREF(value);
        Py_XDECREF(trace);
        PyErr_Clear();
        rc = -1;
    }
    Py_XDECREF(res);
    Py_XDECREF(cb);
    Py_XDECREF(mod);
    Py_XDECREF(args);
    return rc;
}

static int fortran_gemm(const char *prec, const char *transa, const char *transb,
                        const int *m, const int *n, const int *k,
                        double alpha, const void *a, const int *lda,
                        const void *b, const int *ldb, double beta,
                        void *c, const int *ldc)
{
    pthread_once(&g_once, init_python);
    PyGILState_STATE gil = PyGILState_Ensure();
    char ta[2] = { transa && *transa ? *transa : 'N', 0 };
    char tb[2] = { transb && *transb ? *transb : 'N', 0 };
    PyObject *args = Py_BuildValue(
        "(sssiiidKiKidKi)", prec, ta, tb,
        m ? *m : -1, n ? *n : -1, k ? *k : -1, alpha,
        (unsigned long long)(uintptr_t)a, lda ? *lda : 0,
        (unsigned long long)(uintptr_t)b, ldb ? *ldb : 0,
        beta, (unsigned long long)(uintptr_t)c, ldc ? *ldc : 0);
    int rc = run_gateway("fortran_gemm", args);
    PyGILState_Release(gil);
    return rc;
}

void sgemm_(const char *transa, const char *transb, const int *m, const int *n,
            const int *k, const float *alpha, const float *a, const int *lda,
            const float *b, const int *ldb, const float *beta, float *c,
            const int *ldc)
{
    fortran_gemm("s", transa, transb, m, n, k, alpha ? (double)*alpha : 1.0,
                 a, lda, b, ldb, beta ? (double)*beta : 0.0, c, ldc);
}

void dgemm_(const char *transa, const char *transb, const int *m, const int *n,
            const int *k, const double *alpha, const double *a, const int *lda,
            const double *b, const int *ldb, const double *beta, double *c,
            const int *ldc)
{
    fortran_gemm("d", transa, transb, m, n, k, alpha ? *alpha : 1.0,
                 a, lda, b, ldb, beta ? *beta : 0.0, c, ldc);
}

static int cblas_gemm(const char *prec, int layout, int transa, int transb,
                      int m, int n, int k, double alpha, const void *a, int lda,
                      const void *b, int ldb, double beta, void *c, int ldc)
{
    pthread_once(&g_once, init_python);
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *args = Py_BuildValue(
        "(siiiiiidKiKidKi)", prec, layout, transa, transb, m, n, k, alpha,
        (unsigned long long)(uintptr_t)a, lda,
        (unsigned long long)(uintptr_t)b, ldb, beta,
        (unsigned long long)(uintptr_t)c, ldc);
    int rc = run_gateway("cblas_gemm", args);
    PyGILState_Release(gil);
    return rc;
}

int tamm_cblas_sgemm(int layout, int transa, int transb, int m, int n, int k,
                     float alpha, const float *a, int lda, const float *b,
                     int ldb, float beta, float *c, int ldc)
{
    return cblas_gemm("s", layout, transa, transb, m, n, k, (double)alpha,
                      a, lda, b, ldb, (double)beta, c, ldc);
}

int tamm_cblas_dgemm(int layout, int transa, int transb, int m, int n, int k,
                     double alpha, const double *a, int lda, const double *b,
                     int ldb, double beta, double *c, int ldc)
{
    return cblas_gemm("d", layout, transa, transb, m, n, k, alpha,
                      a, lda, b, ldb, beta, c, ldc);
}

void cblas_sgemm(int layout, int transa, int transb, int m, int n, int k,
                 float alpha, const float *a, int lda, const float *b, int ldb,
                 float beta, float *c, int ldc)
{
    tamm_cblas_sgemm(layout, transa, transb, m, n, k, alpha, a, lda, b, ldb,
                     beta, c, ldc);
}

void cblas_dgemm(int layout, int transa, int transb, int m, int n, int k,
                 double alpha, const double *a, int lda, const double *b,
                 int ldb, double beta, double *c, int ldc)
{
    tamm_cblas_dgemm(layout, transa, transb, m, n, k, alpha, a, lda, b, ldb,
                     beta, c, ldc);
}

int tamm_config_report(char *out, int cap)
{
    pthread_once(&g_once, init_python);
    PyGILState_STATE gil = PyGILState_Ensure();
    PyObject *args = Py_BuildValue("()");
    int rc = run_gateway("config_report", args);
    PyGILState_Release(gil);
    pthread_mutex_lock(&g_err_lock);
    int len = (int)strlen(g_last_error);
    if (out && cap > 0) {
        snprintf(out, (size_t)cap, "%s", g_last_error);
    }
    pthread_mutex_unlock(&g_err_lock);
    return rc == 0 ? len : rc;
}

int tamm_last_error(char *out, int cap)
{
    pthread_mutex_lock(&g_err_lock);
    int len = (int)strlen(g_last_error);
    if (out && cap > 0) {
        snprintf(out, (size_t)cap, "%s", g_last_error);
    }
    pthread_mutex_unlock(&g_err_lock);
    return len;
}

int tamm_gateway_ping(void)
{
    pthread_once(&g_once, init_python);
    return 42;
}
