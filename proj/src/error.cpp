#include <chainmart/error.hpp>

namespace chainmart {

std::string_view errc_name(Errc code) noexcept
{
    switch (code) {
#define CASE(name) case Errc::name: return #name;
        CASE(SeedLength)
        CASE(EmptyKey)
        CASE(AuthFailure)
        CASE(BadPublicKey)
        CASE(UnwrapFailure)
        CASE(BadConfig)
        CASE(BadSignature)
        CASE(BadNonce)
        CASE(DuplicateTx)
        CASE(NotYourTurn)
        CASE(UnknownValidator)
        CASE(UnknownSender)
        CASE(UnknownStream)
        CASE(BadItem)
        CASE(UnknownTx)
        CASE(PendingTx)
        CASE(MalformedExport)
        CASE(EmptyPayload)
        CASE(NotFound)
        CASE(IoError)
        CASE(InsufficientFunds)
        CASE(ZeroAmount)
        CASE(BadTerms)
        CASE(UnknownContract)
        CASE(NotParty)
        CASE(AlreadyFunded)
        CASE(WrongState)
        CASE(BadReceiptSignature)
        CASE(PastDeadline)
        CASE(DigestMismatch)
        CASE(NoMismatch)
        CASE(NotYetTimedOut)
        CASE(UnsupportedValue)
        CASE(UnknownIdentity)
        CASE(DuplicateRequest)
        CASE(UnexpectedResponse)
        CASE(UnknownCategory)
        CASE(UnknownSku)
        CASE(UnknownSession)
        CASE(UnknownCustomer)
        CASE(UnknownOrder)
        CASE(EmptyCart)
        CASE(OutOfStock)
        CASE(BadRequest)
#undef CASE
    }
    return "Unknown";
}

} // namespace chainmart
